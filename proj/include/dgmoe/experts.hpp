// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "dgmoe/rng.hpp"
#include "dgmoe/tape.hpp"
#include "dgmoe/tensor.hpp"

namespace dgmoe {

/// Bank of n_experts low-rank token factor pairs (A_e: m x r, B_e: r x d)
/// plus the projection (w_t: d x d, b_t: d) shared across all experts of the
/// bank. Expert token matrices T_e = A_e * B_e are recomputed per forward
/// pass so gradients reach both factors.
struct ExpertBank {
  std::vector<Tensor> a_factors;  // each m x r
  std::vector<Tensor> b_factors;  // each r x d
  Tensor w_t;                     // d x d
  Tensor b_t;                     // d

  std::size_t num_experts() const { return a_factors.size(); }
  std::size_t token_count() const { return a_factors.empty() ? 0 : a_factors[0].rows(); }
  std::size_t rank_r() const { return a_factors.empty() ? 0 : a_factors[0].cols(); }
  std::size_t dim() const { return w_t.rows(); }
};

/// A_e ~ N(0, 1/r), B_e = 0 so every T_e starts at zero; w_t = identity,
/// b_t = 0. Combined with a zero fusion scale this makes a fresh adapter
/// layer an exact no-op.
ExpertBank make_expert_bank(std::size_t n_experts, std::size_t m,
                            std::size_t r, std::size_t d, RngStream rng);

/// T_e = A_e * B_e.
Tensor expert_tokens(const ExpertBank& bank, std::size_t e);

/// softmax(token . T_e^T / sqrt(d)) as a length-m distribution.
Tensor perceptual_map(const Tensor& token, const Tensor& expert_token_matrix);

/// perceptual_map(token, T_e) . (T_e * w_t + b_t), b_t broadcast per row.
Tensor expert_adjustment(const Tensor& token, const ExpertBank& bank,
                         std::size_t e);

/// Gate-weighted sum of the selected experts' adjustments; experts outside
/// `selected` are never evaluated. gate_row must be zero off-selection.
Tensor aggregate(const Tensor& token, const ExpertBank& bank,
                 const Tensor& gate_row,
                 const std::vector<std::size_t>& selected);

/// Per-tape view of a bank: parameter leaves plus lazily built T_e and
/// projected-token nodes, shared by every consumer on the tape.
struct BankTape {
  std::vector<DualPtr> a, b;
  DualPtr w_t, b_t;
  std::vector<DualPtr> tokens_cache;  // T_e nodes
  std::vector<DualPtr> proj_cache;    // T_e * w_t + b_t nodes
  std::size_t dim = 0;

  DualPtr tokens_node(Tape& tape, std::size_t e);
  DualPtr proj_node(Tape& tape, std::size_t e);
};

BankTape bind_bank(Tape& tape, const ExpertBank& bank, bool requires_grad);

/// Batched Eq.-style adjustment over a token matrix: for every expert with a
/// nonempty assignment, gathers its tokens, computes perceptual maps and
/// projected expert tokens, mixes, scales by the gate values and
/// scatter-adds back. Only selected experts are evaluated.
DualPtr moe_adjust_tape(Tape& tape, const DualPtr& tokens,
                        const DualPtr& gates,
                        const std::vector<std::vector<std::size_t>>& selected,
                        BankTape& bank);

void save_expert_bank(const std::filesystem::path& dir,
                      const std::string& name, const ExpertBank& bank);
ExpertBank load_expert_bank(const std::filesystem::path& dir,
                            const std::string& name);

}  // namespace dgmoe
