// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dgmoe/adapter.hpp"
#include "dgmoe/rng.hpp"

namespace dgmoe {

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  bool all_pass = true;
  double tolerance = 0.0;
  double fd_step = 0.0;
  double min_selection_margin = 0.0;
  std::size_t parameter_count = 0;
};

/// Noise-free training loss (mean task cross-entropy plus lambda times the
/// layer-averaged combined load loss) over a fixed batch.
double batch_loss(const AdapterStack& stack, const FrozenBackbone& backbone,
                  const std::vector<SampleFeatures>& batch, double lambda);

/// Analytic gradients of batch_loss for every trainable parameter, aligned
/// with trainable_params order.
std::vector<Tensor> batch_gradients(AdapterStack& stack,
                                    const FrozenBackbone& backbone,
                                    const std::vector<SampleFeatures>& batch,
                                    double lambda);

/// Smallest gap between the k-th and (k+1)-th routing logit across all
/// tokens, layers and modalities; infinite when k == N_e.
double selection_margin(const AdapterStack& stack,
                        const FrozenBackbone& backbone,
                        const std::vector<SampleFeatures>& batch);

/// Moves every trainable parameter off its cold-start value so the gradient
/// check exercises all paths (alpha nonzero, expert tokens nonzero).
void randomize_for_gradcheck(AdapterStack& stack, RngStream rng);

/// Central finite differences against the analytic gradients, one result per
/// parameter group. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// corrupt_backward deliberately scales one analytic group; it exists as a
/// negative control for the reporting path.
GradCheckReport run_gradcheck(AdapterStack& stack,
                              const FrozenBackbone& backbone,
                              const std::vector<SampleFeatures>& batch,
                              double lambda, double fd_step, double tolerance,
                              bool corrupt_backward = false);

}  // namespace dgmoe
