// SPDX-License-Identifier: Apache-2.0
#include "dgmoe/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgmoe/errors.hpp"
#include "dgmoe/ops.hpp"
#include "dgmoe/smtx.hpp"

namespace dgmoe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform (lower parabola envelope).
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const std::size_t n = f.size();
  d.assign(n, 0.0);
  std::vector<int> v(n, 0);
  std::vector<double> z(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) -
           (f[p] + static_cast<double>(p) * p)) /
          (2.0 * (static_cast<double>(q) - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = static_cast<int>(q);
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - v[k];
    d[q] = diff * diff + f[v[k]];
  }
}

struct Shape {
  enum Kind { rect, ellipse } kind = rect;
  int cls = 0;
  double cx = 0.0, cy = 0.0;  // center
  double rx = 1.0, ry = 1.0;  // half extents
};

void paint(std::vector<int>& labels, std::size_t h, std::size_t w,
           const Shape& s) {
  const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.ry)));
  const int y1 = std::min(static_cast<int>(h) - 1,
                          static_cast<int>(std::ceil(s.cy + s.ry)));
  const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.rx)));
  const int x1 = std::min(static_cast<int>(w) - 1,
                          static_cast<int>(std::ceil(s.cx + s.rx)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      bool inside;
      if (s.kind == Shape::rect) {
        inside = std::fabs(x - s.cx) <= s.rx && std::fabs(y - s.cy) <= s.ry;
      } else {
        const double dx = (x - s.cx) / s.rx;
        const double dy = (y - s.cy) / s.ry;
        inside = dx * dx + dy * dy <= 1.0;
      }
      if (inside) labels[static_cast<std::size_t>(y) * w + x] = s.cls;
    }
}

std::vector<int> draw_layout(RngStream rng, const SceneConfig& cfg) {
  const std::size_t h = cfg.height, w = cfg.width;
  const double s = static_cast<double>(std::min(h, w));
  std::vector<Shape> shapes;
  auto center = [&](Shape& sh, double ux, double uy) {
    sh.cx = ux * static_cast<double>(w);
    sh.cy = uy * static_cast<double>(h);
  };
  std::uint64_t slot = 0;
  auto u = [&] { return rng.uniform_at(slot++); };

  if (cfg.classes >= 3) {
    // Confusion pair: class 1 = thin strips, class 2 = large blobs. Nearly
    // identical spectra, clearly different boundary-distance statistics.
    for (int i = 0; i < 2; ++i) {
      Shape strip;
      strip.kind = Shape::rect;
      strip.cls = 1;
      const double width = (0.09 + 0.05 * u()) * s;
      const double length = (0.40 + 0.32 * u()) * s;
      if (u() < 0.5) {
        strip.rx = length / 2.0;
        strip.ry = width / 2.0;
      } else {
        strip.rx = width / 2.0;
        strip.ry = length / 2.0;
      }
      center(strip, u(), u());
      shapes.push_back(strip);
    }
    for (int i = 0; i < 2; ++i) {
      Shape blob;
      blob.kind = Shape::ellipse;
      blob.cls = 2;
      blob.rx = (0.14 + 0.08 * u()) * s;
      blob.ry = (0.14 + 0.08 * u()) * s;
      center(blob, u(), u());
      shapes.push_back(blob);
    }
    for (std::size_t c = 3; c < cfg.classes; ++c)
      for (int i = 0; i < 2; ++i) {
        Shape sh;
        sh.cls = static_cast<int>(c);
        if ((c + static_cast<std::size_t>(i)) % 2 == 0) {
          sh.kind = Shape::rect;
          sh.rx = (0.08 + 0.06 * u()) * s;
          sh.ry = (0.08 + 0.06 * u()) * s;
        } else {
          sh.kind = Shape::ellipse;
          sh.rx = (0.09 + 0.08 * u()) * s;
          sh.ry = (0.09 + 0.08 * u()) * s;
        }
        center(sh, u(), u());
        shapes.push_back(sh);
      }
  } else {
    for (int i = 0; i < 3; ++i) {
      Shape sh;
      sh.cls = 1;
      sh.kind = i < 2 ? Shape::rect : Shape::ellipse;
      sh.rx = (0.10 + 0.10 * u()) * s;
      sh.ry = (0.10 + 0.10 * u()) * s;
      center(sh, u(), u());
      shapes.push_back(sh);
    }
  }

  // Shuffled paint order; later shapes occlude earlier ones.
  for (std::size_t i = shapes.size(); i > 1; --i) {
    const std::size_t j = rng.bits_at(1000 + slot++) % i;
    std::swap(shapes[i - 1], shapes[j]);
  }
  std::vector<int> labels(h * w, 0);
  for (const Shape& sh : shapes) paint(labels, h, w, sh);
  return labels;
}

}  // namespace

Tensor make_signatures(RngStream rng, std::size_t classes,
                       std::size_t channels) {
  if (classes < 2 || channels < 3)
    throw ConfigError("make_signatures: need K >= 2 and C >= 3");
  Tensor sig({classes, channels});
  const double min_sep = 0.5;
  std::uint64_t slot = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (c == 2 && classes >= 3) continue;  // derived from class 1 below
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (std::size_t b = 0; b < channels; ++b)
        sig.at(c, b) = 0.15 + 0.7 * rng.uniform_at(slot + b);
      slot += channels;
      bool ok = true;
      for (std::size_t prev = 0; prev < c; ++prev) {
        if (prev == 2 && classes >= 3) continue;
        double dist2 = 0.0;
        for (std::size_t b = 0; b < channels; ++b) {
          const double d = sig.at(c, b) - sig.at(prev, b);
          dist2 += d * d;
        }
        ok = ok && dist2 >= min_sep * min_sep;
      }
      if (ok) break;
      if (attempt == 999)
        throw InvariantError("make_signatures: could not separate classes");
    }
  }
  if (classes >= 3) {
    // Class 2 sits within 0.05 of class 1: the spectrally confusable pair.
    double norm2 = 0.0;
    std::vector<double> dir(channels);
    for (std::size_t b = 0; b < channels; ++b) {
      dir[b] = rng.normal_at(slot + b);
      norm2 += dir[b] * dir[b];
    }
    const double scale = 0.03 / std::sqrt(norm2);
    for (std::size_t b = 0; b < channels; ++b) {
      double v = sig.at(1, b) + scale * dir[b];
      sig.at(2, b) = std::clamp(v, 0.0, 1.0);
    }
  }
  return sig;
}

Tensor structural_from_labels(const std::vector<int>& labels, std::size_t h,
                              std::size_t w) {
  if (labels.size() != h * w)
    throw DimensionError("structural_from_labels: label length " +
                         std::to_string(labels.size()) + " vs " +
                         std::to_string(h * w));
  std::vector<double> sq(h * w, kInf);
  bool any_boundary = false;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const int c = labels[y * w + x];
      const bool boundary =
          (x + 1 < w && labels[y * w + x + 1] != c) ||
          (x > 0 && labels[y * w + x - 1] != c) ||
          (y + 1 < h && labels[(y + 1) * w + x] != c) ||
          (y > 0 && labels[(y - 1) * w + x] != c);
      if (boundary) {
        sq[y * w + x] = 0.0;
        any_boundary = true;
      }
    }
  Tensor out({1, h, w});
  if (!any_boundary) {
    for (double& v : out.data) v = 1.0;
    return out;
  }
  std::vector<double> col(h), cold(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) col[y] = sq[y * w + x];
    edt_1d(col, cold);
    for (std::size_t y = 0; y < h; ++y) sq[y * w + x] = cold[y];
  }
  std::vector<double> row(w), rowd(w);
  double max_dist = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) row[x] = sq[y * w + x];
    edt_1d(row, rowd);
    for (std::size_t x = 0; x < w; ++x) {
      const double d = std::sqrt(rowd[x]);
      out.data[y * w + x] = d;
      max_dist = std::max(max_dist, d);
    }
  }
  if (max_dist > 0.0)
    for (double& v : out.data) v /= max_dist;
  return out;
}

SynthSample generate_scene(RngStream rng, const SceneConfig& cfg,
                           const Tensor& signatures) {
  if (cfg.classes < 2 || cfg.channels < 3)
    throw ConfigError("generate_scene: need K >= 2 and C >= 3");
  if (signatures.shape !=
      std::vector<std::size_t>{cfg.classes, cfg.channels})
    throw DimensionError("generate_scene: signature table " +
                         shape_string(signatures) + " vs expected " +
                         shape_string({cfg.classes, cfg.channels}));
  const std::size_t h = cfg.height, w = cfg.width;

  std::vector<int> labels;
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (attempt == 100)
      throw InvariantError(
          "generate_scene: could not reach the confusion-pair coverage");
    labels = draw_layout(rng.child("layout").child(attempt), cfg);
    if (cfg.classes < 3) break;
    std::size_t pair = 0;
    for (int c : labels) pair += (c == 1 || c == 2) ? 1 : 0;
    if (static_cast<double>(pair) >=
        cfg.min_pair_fraction * static_cast<double>(h * w))
      break;
  }

  SynthSample sample;
  sample.height = h;
  sample.width = w;
  sample.labels = std::move(labels);
  sample.image = Tensor({cfg.channels, h, w});
  RngStream pixel = rng.child("pixel");
  for (std::size_t c = 0; c < cfg.channels; ++c)
    for (std::size_t p = 0; p < h * w; ++p) {
      const double base = signatures.at(
          static_cast<std::size_t>(sample.labels[p]), c);
      const double noisy =
          base + cfg.pixel_noise * pixel.normal_at(c * h * w + p);
      sample.image.data[c * h * w + p] = std::clamp(noisy, 0.0, 1.0);
    }
  sample.structural = structural_from_labels(sample.labels, h, w);
  sample.domain = "source";
  return sample;
}

DomainShift identity_shift(std::size_t channels) {
  DomainShift shift;
  shift.gain = Tensor({channels}, 1.0);
  shift.bias = Tensor({channels}, 0.0);
  shift.gamma = Tensor({channels}, 1.0);
  shift.noise_sigma = 0.0;
  return shift;
}

DomainShift make_default_shift(RngStream rng, std::size_t channels) {
  DomainShift shift;
  shift.gain = Tensor({channels});
  shift.bias = Tensor({channels});
  shift.gamma = Tensor({channels});
  shift.noise_sigma = 0.02;
  for (std::size_t b = 0; b < channels; ++b) {
    shift.gain.data[b] = 0.75 + 0.55 * rng.uniform_at(3 * b);
    shift.gamma.data[b] = 0.65 + 0.80 * rng.uniform_at(3 * b + 1);
    shift.bias.data[b] = -0.12 + 0.24 * rng.uniform_at(3 * b + 2);
  }
  return shift;
}

SynthSample apply_shift(const SynthSample& sample, const DomainShift& shift,
                        const RngStream& rng) {
  const std::size_t channels = sample.image.shape[0];
  if (shift.gain.numel() != channels)
    throw DimensionError("apply_shift: shift has " +
                         std::to_string(shift.gain.numel()) +
                         " bands, image has " + std::to_string(channels));
  for (std::size_t b = 0; b < channels; ++b)
    if (shift.gain.data[b] <= 0.0 || shift.gamma.data[b] <= 0.0)
      throw ConfigError("apply_shift: gain and gamma must be positive");
  SynthSample out = sample;
  out.domain = "target";
  const std::size_t plane = sample.height * sample.width;
  for (std::size_t b = 0; b < channels; ++b) {
    const double gain = shift.gain.data[b];
    const double bias = shift.bias.data[b];
    const double gamma = shift.gamma.data[b];
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = sample.image.data[b * plane + p];
      const double powed = gamma == 1.0 ? v : std::pow(v, gamma);
      const double noise =
          shift.noise_sigma == 0.0
              ? 0.0
              : shift.noise_sigma * rng.normal_at(b * plane + p);
      out.image.data[b * plane + p] =
          std::clamp(gain * powed + bias + noise, 0.0, 1.0);
    }
  }
  return out;
}

std::vector<int> token_majority_labels(const std::vector<int>& labels,
                                       std::size_t h, std::size_t w,
                                       std::size_t patch,
                                       std::size_t classes) {
  if (h % patch != 0 || w % patch != 0)
    throw ConfigError("token_majority_labels: dims not divisible by patch");
  const std::size_t gh = h / patch, gw = w / patch;
  std::vector<int> out(gh * gw, 0);
  std::vector<std::size_t> counts(classes);
  for (std::size_t by = 0; by < gh; ++by)
    for (std::size_t bx = 0; bx < gw; ++bx) {
      std::fill(counts.begin(), counts.end(), 0);
      for (std::size_t py = 0; py < patch; ++py)
        for (std::size_t px = 0; px < patch; ++px) {
          const int c = labels[(by * patch + py) * w + bx * patch + px];
          if (c < 0 || static_cast<std::size_t>(c) >= classes)
            throw InvariantError("token_majority_labels: label out of range");
          ++counts[static_cast<std::size_t>(c)];
        }
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (counts[c] > counts[best]) best = c;  // ties keep the lowest id
      out[by * gw + bx] = static_cast<int>(best);
    }
  return out;
}

void accumulate_confusion(std::vector<std::vector<std::uint64_t>>& confusion,
                          const std::vector<int>& prediction,
                          const std::vector<int>& truth) {
  if (prediction.size() != truth.size())
    throw DimensionError("accumulate_confusion: size mismatch");
  const std::size_t classes = confusion.size();
  for (std::size_t p = 0; p < truth.size(); ++p) {
    const auto t = static_cast<std::size_t>(truth[p]);
    const auto y = static_cast<std::size_t>(prediction[p]);
    if (t >= classes || y >= classes)
      throw InvariantError("accumulate_confusion: class id out of range");
    ++confusion[t][y];
  }
}

EvalMetrics metrics_from_confusion(
    const std::vector<std::vector<std::uint64_t>>& confusion) {
  const std::size_t classes = confusion.size();
  EvalMetrics metrics;
  metrics.confusion = confusion;
  metrics.per_class_iou.assign(classes, std::numeric_limits<double>::quiet_NaN());
  metrics.iou_included.assign(classes, false);
  metrics.acc_included.assign(classes, false);
  double iou_sum = 0.0, acc_sum = 0.0;
  std::size_t iou_n = 0, acc_n = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::uint64_t truth_total = 0, pred_total = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      truth_total += confusion[c][j];
      pred_total += confusion[j][c];
    }
    const std::uint64_t tp = confusion[c][c];
    const std::uint64_t denom = truth_total + pred_total - tp;
    if (denom > 0) {
      metrics.iou_included[c] = true;
      metrics.per_class_iou[c] =
          static_cast<double>(tp) / static_cast<double>(denom);
      iou_sum += metrics.per_class_iou[c];
      ++iou_n;
    }
    if (truth_total > 0) {
      metrics.acc_included[c] = true;
      acc_sum += static_cast<double>(tp) / static_cast<double>(truth_total);
      ++acc_n;
    }
  }
  metrics.miou = iou_n > 0 ? iou_sum / static_cast<double>(iou_n) : 0.0;
  metrics.macc = acc_n > 0 ? acc_sum / static_cast<double>(acc_n) : 0.0;
  return metrics;
}

SampleFeatures features_for(const AdapterStack& stack,
                            const FrozenBackbone& backbone,
                            const SynthSample& sample) {
  const Tensor* structural = &sample.structural;
  Tensor zeroed;
  if (stack.variant == Variant::no_structural) {
    zeroed = Tensor(sample.structural.shape);
    structural = &zeroed;
  }
  SampleFeatures features =
      extract_features(backbone, sample.image, *structural);
  features.token_labels =
      token_majority_labels(sample.labels, sample.height, sample.width,
                            backbone.patch, stack.cfg.classes);
  return features;
}

std::vector<int> predict_pixels(const AdapterStack& stack,
                                const FrozenBackbone& backbone,
                                const SynthSample& sample) {
  SampleFeatures features = features_for(stack, backbone, sample);
  Tape tape;
  StackNodes nodes = bind_stack(tape, stack, false);
  StackForward fwd = forward_stack_tape(tape, stack, nodes, backbone, features,
                                        /*noise=*/false, RngStream(0));
  const Tensor& logits = fwd.logits->value;
  const std::size_t patch = backbone.patch;
  const std::size_t gw = sample.width / patch;
  std::vector<int> pixels(sample.height * sample.width, 0);
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(t, c) > logits.at(t, best)) best = c;
    const std::size_t by = t / gw, bx = t % gw;
    for (std::size_t py = 0; py < patch; ++py)
      for (std::size_t px = 0; px < patch; ++px)
        pixels[(by * patch + py) * sample.width + bx * patch + px] =
            static_cast<int>(best);
  }
  return pixels;
}

EvalMetrics evaluate(const AdapterStack& stack, const FrozenBackbone& backbone,
                     const std::vector<SynthSample>& samples) {
  if (samples.empty())
    throw DegenerateInputError("evaluate: empty sample set");
  std::vector<std::vector<std::uint64_t>> confusion(
      stack.cfg.classes, std::vector<std::uint64_t>(stack.cfg.classes, 0));
  for (const SynthSample& sample : samples)
    accumulate_confusion(confusion, predict_pixels(stack, backbone, sample),
                         sample.labels);
  return metrics_from_confusion(confusion);
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  RngStream root(cfg.seed);
  Dataset dataset;
  dataset.cfg = cfg;
  dataset.signatures = make_signatures(root.child("signatures"),
                                       cfg.scene.classes, cfg.scene.channels);
  dataset.shift = make_default_shift(root.child("shift"), cfg.scene.channels);
  RngStream scenes = root.child("scene");
  for (std::size_t i = 0; i < cfg.source_scenes; ++i)
    dataset.source.push_back(
        generate_scene(scenes.child(i), cfg.scene, dataset.signatures));
  RngStream shift_noise = root.child("shift_noise");
  for (std::size_t j = 0; j < cfg.target_scenes; ++j) {
    SynthSample scene = generate_scene(scenes.child(cfg.source_scenes + j),
                                       cfg.scene, dataset.signatures);
    dataset.target.push_back(
        apply_shift(scene, dataset.shift, shift_noise.child(j)));
  }
  return dataset;
}

namespace {

Tensor labels_to_tensor(const std::vector<int>& labels, std::size_t h,
                        std::size_t w) {
  Tensor t({h, w});
  for (std::size_t i = 0; i < labels.size(); ++i)
    t.data[i] = static_cast<double>(labels[i]);
  return t;
}

std::vector<int> labels_from_tensor(const Tensor& t) {
  std::vector<int> labels(t.numel());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<int>(t.data[i]);
  return labels;
}

std::string sample_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return buf;
}

void save_split(const std::filesystem::path& dir,
                const std::vector<SynthSample>& samples) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = sample_stem(i);
    save_smtx(dir / (stem + ".image.smtx"), samples[i].image);
    save_smtx(dir / (stem + ".structural.smtx"), samples[i].structural);
    save_smtx(dir / (stem + ".labels.smtx"),
              labels_to_tensor(samples[i].labels, samples[i].height,
                               samples[i].width));
  }
}

std::vector<SynthSample> load_split(const std::filesystem::path& dir,
                                    std::size_t count,
                                    const std::string& domain) {
  std::vector<SynthSample> samples;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string stem = sample_stem(i);
    SynthSample s;
    s.image = load_smtx(dir / (stem + ".image.smtx"));
    s.structural = load_smtx(dir / (stem + ".structural.smtx"));
    Tensor labels = load_smtx(dir / (stem + ".labels.smtx"));
    s.height = labels.shape[0];
    s.width = labels.shape[1];
    s.labels = labels_from_tensor(labels);
    s.domain = domain;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                  const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.emplace_back("seed", std::to_string(dataset.cfg.seed));
  m.emplace_back("H", std::to_string(dataset.cfg.scene.height));
  m.emplace_back("W", std::to_string(dataset.cfg.scene.width));
  m.emplace_back("K", std::to_string(dataset.cfg.scene.classes));
  m.emplace_back("C", std::to_string(dataset.cfg.scene.channels));
  m.emplace_back("pixel_noise", format_double(dataset.cfg.scene.pixel_noise));
  m.emplace_back("source_scenes", std::to_string(dataset.cfg.source_scenes));
  m.emplace_back("target_scenes", std::to_string(dataset.cfg.target_scenes));
  m.emplace_back("shift_noise_sigma", format_double(dataset.shift.noise_sigma));
  m.emplace_back("config_hash", config_hash);
  save_manifest(dir / "manifest.txt", m);
  save_smtx(dir / "signatures.smtx", dataset.signatures);
  save_smtx(dir / "shift.gain.smtx", dataset.shift.gain);
  save_smtx(dir / "shift.bias.smtx", dataset.shift.bias);
  save_smtx(dir / "shift.gamma.smtx", dataset.shift.gamma);
  save_split(dir / "source", dataset.source);
  save_split(dir / "target", dataset.target);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Manifest m = load_manifest(dir / "manifest.txt");
  Dataset dataset;
  dataset.cfg.seed = std::stoull(manifest_get(m, "seed"));
  dataset.cfg.scene.height = std::stoull(manifest_get(m, "H"));
  dataset.cfg.scene.width = std::stoull(manifest_get(m, "W"));
  dataset.cfg.scene.classes = std::stoull(manifest_get(m, "K"));
  dataset.cfg.scene.channels = std::stoull(manifest_get(m, "C"));
  dataset.cfg.scene.pixel_noise = std::stod(manifest_get(m, "pixel_noise"));
  dataset.cfg.source_scenes = std::stoull(manifest_get(m, "source_scenes"));
  dataset.cfg.target_scenes = std::stoull(manifest_get(m, "target_scenes"));
  dataset.signatures = load_smtx(dir / "signatures.smtx");
  dataset.shift.gain = load_smtx(dir / "shift.gain.smtx");
  dataset.shift.bias = load_smtx(dir / "shift.bias.smtx");
  dataset.shift.gamma = load_smtx(dir / "shift.gamma.smtx");
  dataset.shift.noise_sigma = std::stod(manifest_get(m, "shift_noise_sigma"));
  dataset.source =
      load_split(dir / "source", dataset.cfg.source_scenes, "source");
  dataset.target =
      load_split(dir / "target", dataset.cfg.target_scenes, "target");
  return dataset;
}

}  // namespace dgmoe
