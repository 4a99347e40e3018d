// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/trainer.hpp"

#include <cmath>
#include <string>
#include <thread>

#include "dgmoe/errors.hpp"
#include "dgmoe/ops.hpp"

namespace dgmoe {

namespace {

struct SampleResult {
  double task = 0.0;
  double load = 0.0;
  std::vector<Tensor> grads;
  Tensor importance_visual;
  Tensor importance_depth;
};

}  // namespace

Trainer::Trainer(AdapterStack& stack, const FrozenBackbone& backbone,
                 std::vector<SampleFeatures> samples, TrainOptions options,
                 RngStream root)
    : stack_(stack),
      backbone_(backbone),
      samples_(std::move(samples)),
      options_(options),
      root_(root),
      adam_(options.adam, trainable_params(stack)),
      params_(trainable_params(stack)) {}

LossReport Trainer::step(const std::vector<std::size_t>& batch_ids) {
  if (batch_ids.empty())
    throw DegenerateInputError("train step: empty batch");
  const std::size_t batch = batch_ids.size();
  const std::size_t n_layers = stack_.layers.size();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const RngStream noise_root = root_.child("noise").child(step_counter_);

  std::vector<SampleResult> results(batch);
  auto process = [&](std::size_t pos) {
    const std::size_t id = batch_ids[pos];
    const SampleFeatures& features = samples_[id];
    Tape tape;
    StackNodes nodes = bind_stack(tape, stack_, true);
    StackForward fwd =
        forward_stack_tape(tape, stack_, nodes, backbone_, features,
                           options_.noise_enabled, noise_root.child(id));
    DualPtr ce = tape.cross_entropy_rows(fwd.logits, features.token_labels,
                                         /*ignore_id=*/-1);
    DualPtr load_sum = tape.constant(Tensor::scalar(0.0));
    for (LayerGateRecord& rec : fwd.layer_gates) {
      DualPtr lv = tape.cv_squared(tape.column_sums(rec.visual_gates));
      DualPtr ld = tape.cv_squared(tape.column_sums(rec.depth_gates));
      load_sum = tape.add(load_sum, tape.scale(tape.add(lv, ld), 0.5));
    }
    DualPtr load_avg =
        tape.scale(load_sum, 1.0 / static_cast<double>(n_layers));
    DualPtr total = tape.add(ce, tape.scale(load_avg, options_.lambda));
    DualPtr root = tape.scale(total, inv_batch);
    tape.backward(root);

    SampleResult& res = results[pos];
    res.task = ce->value.data[0];
    res.load = load_avg->value.data[0];
    res.grads.reserve(nodes.flat.size());
    for (const DualPtr& node : nodes.flat) res.grads.push_back(node->grad);
    res.importance_visual = Tensor({stack_.cfg.n_experts});
    res.importance_depth = Tensor({stack_.cfg.n_experts});
    for (const LayerGateRecord& rec : fwd.layer_gates) {
      Tensor iv = ops::column_sums(rec.visual.gates);
      Tensor id_imp = ops::column_sums(rec.depth.gates);
      res.importance_visual = ops::add(res.importance_visual, iv);
      res.importance_depth = ops::add(res.importance_depth, id_imp);
    }
  };

  const std::size_t workers = std::min(options_.threads == 0 ? std::size_t{1}
                                                             : options_.threads,
                                       batch);
  if (workers <= 1) {
    for (std::size_t pos = 0; pos < batch; ++pos) process(pos);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t pos = w; pos < batch; pos += workers) process(pos);
      });
    for (std::thread& th : pool) th.join();
  }

  // Fixed-order reduction keeps results identical across thread counts.
  last_grads_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i)
    last_grads_.push_back(Tensor(params_[i].tensor->shape));
  double task_sum = 0.0, load_sum = 0.0;
  Tensor imp_v({stack_.cfg.n_experts});
  Tensor imp_d({stack_.cfg.n_experts});
  for (std::size_t pos = 0; pos < batch; ++pos) {
    const SampleResult& res = results[pos];
    task_sum += res.task;
    load_sum += res.load;
    imp_v = ops::add(imp_v, res.importance_visual);
    imp_d = ops::add(imp_d, res.importance_depth);
    for (std::size_t i = 0; i < last_grads_.size(); ++i)
      for (std::size_t j = 0; j < last_grads_[i].numel(); ++j)
        last_grads_[i].data[j] += res.grads[i].data[j];
  }

  LossReport report = total_loss(task_sum * inv_batch, load_sum * inv_batch,
                                 options_.lambda);
  report.step = step_counter_;
  const double norm = inv_batch / static_cast<double>(n_layers);
  report.importance_visual = ops::scale(imp_v, norm);
  report.importance_depth = ops::scale(imp_d, norm);
  if (!std::isfinite(report.total))
    throw DivergenceError("training diverged at step " +
                          std::to_string(step_counter_) +
                          ": non-finite loss");

  adam_.step(params_, last_grads_);
  ++step_counter_;
  return report;
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(
    std::size_t epoch) const {
  std::vector<std::size_t> order(samples_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream shuffle = root_.child("shuffle").child(epoch);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle.next_index(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += options_.batch) {
    const std::size_t end = std::min(order.size(), start + options_.batch);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<LossReport> Trainer::run() {
  std::vector<LossReport> reports;
  for (std::size_t epoch = 0; epoch < options_.epochs; ++epoch)
    for (const auto& batch : epoch_batches(epoch))
      reports.push_back(step(batch));
  return reports;
}

LossReport train_step(Trainer& trainer, const std::vector<std::size_t>& batch) {
  return trainer.step(batch);
}

}  // namespace dgmoe
