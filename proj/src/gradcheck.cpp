// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgmoe/errors.hpp"
#include "dgmoe/ops.hpp"

namespace dgmoe {

namespace {

struct BatchPass {
  double loss = 0.0;
  std::vector<Tensor> grads;
  std::vector<LayerGateRecord> gates;  // of the last sample, margin uses all
};

BatchPass run_batch(AdapterStack& stack, const FrozenBackbone& backbone,
                    const std::vector<SampleFeatures>& batch, double lambda,
                    bool want_grads,
                    std::vector<std::vector<LayerGateRecord>>* all_gates) {
  if (batch.empty()) throw DegenerateInputError("gradcheck: empty batch");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const double inv_layers = 1.0 / static_cast<double>(stack.layers.size());
  const RngStream unused_noise(0);

  BatchPass out;
  std::vector<NamedParam> params = trainable_params(stack);
  if (want_grads)
    for (const NamedParam& p : params) out.grads.emplace_back(Tensor(p.tensor->shape));

  for (const SampleFeatures& features : batch) {
    Tape tape;
    StackNodes nodes = bind_stack(tape, stack, want_grads);
    StackForward fwd = forward_stack_tape(tape, stack, nodes, backbone,
                                          features, /*noise=*/false,
                                          unused_noise);
    DualPtr ce = tape.cross_entropy_rows(fwd.logits, features.token_labels, -1);
    DualPtr load_sum = tape.constant(Tensor::scalar(0.0));
    for (LayerGateRecord& rec : fwd.layer_gates) {
      DualPtr lv = tape.cv_squared(tape.column_sums(rec.visual_gates));
      DualPtr ld = tape.cv_squared(tape.column_sums(rec.depth_gates));
      load_sum = tape.add(load_sum, tape.scale(tape.add(lv, ld), 0.5));
    }
    DualPtr total =
        tape.add(ce, tape.scale(tape.scale(load_sum, inv_layers), lambda));
    out.loss += inv_batch * total->value.data[0];
    if (want_grads) {
      DualPtr root = tape.scale(total, inv_batch);
      tape.backward(root);
      for (std::size_t i = 0; i < nodes.flat.size(); ++i)
        out.grads[i] = ops::add(out.grads[i], nodes.flat[i]->grad);
    }
    if (all_gates) all_gates->push_back(std::move(fwd.layer_gates));
  }
  return out;
}

}  // namespace

double batch_loss(const AdapterStack& stack, const FrozenBackbone& backbone,
                  const std::vector<SampleFeatures>& batch, double lambda) {
  return run_batch(const_cast<AdapterStack&>(stack), backbone, batch, lambda,
                   /*want_grads=*/false, nullptr)
      .loss;
}

std::vector<Tensor> batch_gradients(AdapterStack& stack,
                                    const FrozenBackbone& backbone,
                                    const std::vector<SampleFeatures>& batch,
                                    double lambda) {
  return run_batch(stack, backbone, batch, lambda, /*want_grads=*/true, nullptr)
      .grads;
}

double selection_margin(const AdapterStack& stack,
                        const FrozenBackbone& backbone,
                        const std::vector<SampleFeatures>& batch) {
  std::vector<std::vector<LayerGateRecord>> gates;
  run_batch(const_cast<AdapterStack&>(stack), backbone, batch, 0.0,
            /*want_grads=*/false, &gates);
  const std::size_t k = stack.cfg.k;
  const std::size_t ne = stack.cfg.n_experts;
  if (k >= ne) return std::numeric_limits<double>::infinity();
  double margin = std::numeric_limits<double>::infinity();
  auto scan = [&](const Tensor& logits) {
    std::vector<double> row(ne);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      for (std::size_t e = 0; e < ne; ++e) row[e] = logits.at(i, e);
      std::sort(row.begin(), row.end(), std::greater<>());
      margin = std::min(margin, row[k - 1] - row[k]);
    }
  };
  for (const auto& sample_gates : gates)
    for (const LayerGateRecord& rec : sample_gates) {
      scan(rec.visual.logits);
      scan(rec.depth.logits);
    }
  return margin;
}

void randomize_for_gradcheck(AdapterStack& stack, RngStream rng) {
  std::vector<NamedParam> params = trainable_params(stack);
  for (std::size_t i = 0; i < params.size(); ++i) {
    RngStream stream = rng.child(params[i].name);
    Tensor& t = *params[i].tensor;
    for (std::size_t j = 0; j < t.numel(); ++j)
      t.data[j] += 0.2 * stream.normal_at(j);
  }
  // A clearly nonzero fusion scale so gradient flows into every layer path.
  for (AdapterLayer& layer : stack.layers)
    layer.fusion.alpha.data[0] = 0.5 + 0.1 * layer.fusion.alpha.data[0];
}

GradCheckReport run_gradcheck(AdapterStack& stack,
                              const FrozenBackbone& backbone,
                              const std::vector<SampleFeatures>& batch,
                              double lambda, double fd_step, double tolerance,
                              bool corrupt_backward) {
  GradCheckReport report;
  report.tolerance = tolerance;
  report.fd_step = fd_step;
  report.min_selection_margin = selection_margin(stack, backbone, batch);

  std::vector<NamedParam> params = trainable_params(stack);
  std::vector<Tensor> analytic = batch_gradients(stack, backbone, batch, lambda);
  if (corrupt_backward && !analytic.empty())
    for (double& v : analytic.back().data) v = 2.0 * v + 1e-3;

  for (std::size_t i = 0; i < params.size(); ++i) {
    GradCheckGroup group;
    group.name = params[i].name;
    Tensor& theta = *params[i].tensor;
    report.parameter_count += theta.numel();
    for (std::size_t j = 0; j < theta.numel(); ++j) {
      const double saved = theta.data[j];
      theta.data[j] = saved + fd_step;
      const double up = batch_loss(stack, backbone, batch, lambda);
      theta.data[j] = saved - fd_step;
      const double down = batch_loss(stack, backbone, batch, lambda);
      theta.data[j] = saved;
      const double numeric = (up - down) / (2.0 * fd_step);
      const double a = analytic[i].data[j];
      const double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      if (rel > group.max_rel_err) {
        group.max_rel_err = rel;
        group.worst_index = j;
        group.analytic_at_worst = a;
        group.numeric_at_worst = numeric;
      }
    }
    group.pass = group.max_rel_err < tolerance;
    report.all_pass = report.all_pass && group.pass;
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace dgmoe
