// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dgmoe/adapter.hpp"
#include "dgmoe/losses.hpp"
#include "dgmoe/optim.hpp"
#include "dgmoe/rng.hpp"

namespace dgmoe {

struct TrainOptions {
  double lambda = 0.01;
  AdamWOptions adam;
  std::size_t batch = 8;
  std::size_t epochs = 20;
  std::size_t threads = 1;
  bool noise_enabled = true;
};

/// Owns the optimization loop over a fixed set of precomputed sample
/// features. The backbone is read-only; only adapter and head parameters are
/// updated. Per-sample gradients may be computed on worker threads but are
/// always reduced in ascending sample order, so results are independent of
/// the thread count.
class Trainer {
 public:
  Trainer(AdapterStack& stack, const FrozenBackbone& backbone,
          std::vector<SampleFeatures> samples, TrainOptions options,
          RngStream root);

  /// One optimizer step over the given sample indices.
  LossReport step(const std::vector<std::size_t>& batch_ids);

  /// Deterministically shuffled batch schedule for one epoch.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

  /// Full training loop; returns the per-step reports in order.
  std::vector<LossReport> run();

  /// Flat per-parameter gradients of the most recent step (aligned with
  /// trainable_params order). Exposed for isolation and gradient tests.
  const std::vector<Tensor>& last_gradients() const { return last_grads_; }

  std::uint64_t steps_taken() const { return step_counter_; }
  std::size_t sample_count() const { return samples_.size(); }
  const TrainOptions& options() const { return options_; }

 private:
  AdapterStack& stack_;
  const FrozenBackbone& backbone_;
  std::vector<SampleFeatures> samples_;
  TrainOptions options_;
  RngStream root_;
  AdamW adam_;
  std::vector<NamedParam> params_;
  std::vector<Tensor> last_grads_;
  std::uint64_t step_counter_ = 0;
};

/// Single spec-level training step on an ad-hoc batch.
LossReport train_step(Trainer& trainer, const std::vector<std::size_t>& batch);

}  // namespace dgmoe
