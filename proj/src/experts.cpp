// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/experts.hpp"

#include <cmath>
#include <string>

#include "dgmoe/errors.hpp"
#include "dgmoe/ops.hpp"
#include "dgmoe/smtx.hpp"

namespace dgmoe {

ExpertBank make_expert_bank(std::size_t n_experts, std::size_t m,
                            std::size_t r, std::size_t d, RngStream rng) {
  if (n_experts < 1 || m < 1 || r < 1 || d < 1)
    throw ConfigError("make_expert_bank: all dimensions must be >= 1");
  if (r >= d || r > m)
    throw ConfigError("make_expert_bank: rank r=" + std::to_string(r) +
                      " must satisfy r < d and r <= m (m=" + std::to_string(m) +
                      ", d=" + std::to_string(d) + ")");
  ExpertBank bank;
  const double std = 1.0 / std::sqrt(static_cast<double>(r));
  for (std::size_t e = 0; e < n_experts; ++e) {
    Tensor a({m, r});
    RngStream stream = rng.child(e);
    for (std::size_t i = 0; i < a.numel(); ++i)
      a.data[i] = std * stream.normal_at(i);
    bank.a_factors.push_back(std::move(a));
    bank.b_factors.emplace_back(Tensor({r, d}));
  }
  bank.w_t = Tensor({d, d});
  for (std::size_t i = 0; i < d; ++i) bank.w_t.at(i, i) = 1.0;
  bank.b_t = Tensor({d});
  return bank;
}

Tensor expert_tokens(const ExpertBank& bank, std::size_t e) {
  if (e >= bank.num_experts())
    throw ConfigError("expert_tokens: expert index " + std::to_string(e) +
                      " out of range for N_e=" +
                      std::to_string(bank.num_experts()));
  return ops::matmul(bank.a_factors[e], bank.b_factors[e]);
}

namespace {
Tensor as_row_matrix(const Tensor& token) {
  if (token.rank() == 1) {
    Tensor row({1, token.numel()});
    row.data = token.data;
    return row;
  }
  require_rank(token, 2, "token");
  return token;
}
}  // namespace

Tensor perceptual_map(const Tensor& token, const Tensor& expert_token_matrix) {
  require_rank(expert_token_matrix, 2, "perceptual_map");
  Tensor row = as_row_matrix(token);
  if (row.cols() != expert_token_matrix.cols())
    throw DimensionError("perceptual_map: token dim " +
                         std::to_string(row.cols()) + " vs expert token dim " +
                         std::to_string(expert_token_matrix.cols()));
  const double inv_sqrt_d =
      1.0 / std::sqrt(static_cast<double>(expert_token_matrix.cols()));
  Tensor scores =
      ops::scale(ops::matmul_nt(row, expert_token_matrix), inv_sqrt_d);
  Tensor soft = ops::softmax_rows(scores);
  Tensor out({expert_token_matrix.rows()});
  out.data = soft.data;
  return out;
}

Tensor expert_adjustment(const Tensor& token, const ExpertBank& bank,
                         std::size_t e) {
  Tensor te = expert_tokens(bank, e);
  Tensor amap = perceptual_map(token, te);
  Tensor projected = ops::add_row_broadcast(ops::matmul(te, bank.w_t), bank.b_t);
  Tensor arow({1, amap.numel()});
  arow.data = amap.data;
  Tensor mixed = ops::matmul(arow, projected);
  Tensor out({bank.dim()});
  out.data = mixed.data;
  return out;
}

Tensor aggregate(const Tensor& token, const ExpertBank& bank,
                 const Tensor& gate_row,
                 const std::vector<std::size_t>& selected) {
  require_rank(gate_row, 1, "aggregate");
  if (gate_row.numel() != bank.num_experts())
    throw DimensionError("aggregate: gate row length " +
                         std::to_string(gate_row.numel()) + " vs N_e=" +
                         std::to_string(bank.num_experts()));
  if (selected.empty())
    throw InvariantError("aggregate: empty expert selection");
  for (std::size_t e = 0; e < gate_row.numel(); ++e) {
    const bool in_selected =
        std::find(selected.begin(), selected.end(), e) != selected.end();
    if (!in_selected && gate_row.data[e] != 0.0)
      throw InvariantError("aggregate: nonzero gate " +
                           std::to_string(gate_row.data[e]) +
                           " outside the selected set at expert " +
                           std::to_string(e));
  }
  Tensor out({bank.dim()});
  for (std::size_t e : selected) {
    Tensor adj = expert_adjustment(token, bank, e);
    const double g = gate_row.data[e];
    for (std::size_t j = 0; j < out.numel(); ++j) out.data[j] += g * adj.data[j];
  }
  return out;
}

DualPtr BankTape::tokens_node(Tape& tape, std::size_t e) {
  if (!tokens_cache[e]) tokens_cache[e] = tape.matmul(a[e], b[e]);
  return tokens_cache[e];
}

DualPtr BankTape::proj_node(Tape& tape, std::size_t e) {
  if (!proj_cache[e]) {
    DualPtr te = tokens_node(tape, e);
    proj_cache[e] = tape.add_row_broadcast(tape.matmul(te, w_t), b_t);
  }
  return proj_cache[e];
}

BankTape bind_bank(Tape& tape, const ExpertBank& bank, bool requires_grad) {
  BankTape nodes;
  nodes.dim = bank.dim();
  for (std::size_t e = 0; e < bank.num_experts(); ++e) {
    nodes.a.push_back(tape.leaf(bank.a_factors[e], requires_grad));
    nodes.b.push_back(tape.leaf(bank.b_factors[e], requires_grad));
  }
  nodes.w_t = tape.leaf(bank.w_t, requires_grad);
  nodes.b_t = tape.leaf(bank.b_t, requires_grad);
  nodes.tokens_cache.assign(bank.num_experts(), nullptr);
  nodes.proj_cache.assign(bank.num_experts(), nullptr);
  return nodes;
}

DualPtr moe_adjust_tape(Tape& tape, const DualPtr& tokens,
                        const DualPtr& gates,
                        const std::vector<std::vector<std::size_t>>& selected,
                        BankTape& bank) {
  const std::size_t t = tokens->value.rows();
  const std::size_t d = tokens->value.cols();
  const std::size_t n_experts = bank.a.size();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Invert the per-token selection into per-expert token lists (ascending).
  std::vector<std::vector<std::size_t>> assigned(n_experts);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t e : selected[i]) assigned[e].push_back(i);

  DualPtr delta = tape.constant(Tensor({t, d}));
  for (std::size_t e = 0; e < n_experts; ++e) {
    if (assigned[e].empty()) continue;
    DualPtr sub = tape.gather_rows(tokens, assigned[e]);
    DualPtr scores =
        tape.scale(tape.matmul_nt(sub, bank.tokens_node(tape, e)), inv_sqrt_d);
    DualPtr amap = tape.softmax_rows(scores);
    DualPtr mixed = tape.matmul(amap, bank.proj_node(tape, e));
    DualPtr weights = tape.gather_column(gates, e, assigned[e]);
    DualPtr weighted = tape.scale_rows(mixed, weights);
    delta = tape.add(delta, tape.scatter_rows(weighted, assigned[e], t));
  }
  return delta;
}

void save_expert_bank(const std::filesystem::path& dir,
                      const std::string& name, const ExpertBank& bank) {
  std::filesystem::create_directories(dir);
  for (std::size_t e = 0; e < bank.num_experts(); ++e) {
    save_smtx(dir / (name + ".expert" + std::to_string(e) + ".a.smtx"),
              bank.a_factors[e]);
    save_smtx(dir / (name + ".expert" + std::to_string(e) + ".b.smtx"),
              bank.b_factors[e]);
  }
  save_smtx(dir / (name + ".w_t.smtx"), bank.w_t);
  save_smtx(dir / (name + ".b_t.smtx"), bank.b_t);
  Manifest m;
  m.emplace_back("N_e", std::to_string(bank.num_experts()));
  m.emplace_back("m", std::to_string(bank.token_count()));
  m.emplace_back("r", std::to_string(bank.rank_r()));
  m.emplace_back("d", std::to_string(bank.dim()));
  save_manifest(dir / (name + ".bank.manifest"), m);
}

ExpertBank load_expert_bank(const std::filesystem::path& dir,
                            const std::string& name) {
  Manifest m = load_manifest(dir / (name + ".bank.manifest"));
  const auto n_experts =
      static_cast<std::size_t>(std::stoull(manifest_get(m, "N_e")));
  ExpertBank bank;
  for (std::size_t e = 0; e < n_experts; ++e) {
    bank.a_factors.push_back(
        load_smtx(dir / (name + ".expert" + std::to_string(e) + ".a.smtx")));
    bank.b_factors.push_back(
        load_smtx(dir / (name + ".expert" + std::to_string(e) + ".b.smtx")));
  }
  bank.w_t = load_smtx(dir / (name + ".w_t.smtx"));
  bank.b_t = load_smtx(dir / (name + ".b_t.smtx"));
  return bank;
}

}  // namespace dgmoe
