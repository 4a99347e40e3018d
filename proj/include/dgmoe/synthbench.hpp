// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dgmoe/adapter.hpp"
#include "dgmoe/rng.hpp"
#include "dgmoe/tensor.hpp"

namespace dgmoe {

/// One synthetic scene: multi-band reflectances in [0,1], a normalized
/// distance-to-class-boundary map (zero exactly on boundaries), per-pixel
/// class ids, and a domain tag.
struct SynthSample {
  Tensor image;       // C x H x W
  Tensor structural;  // 1 x H x W
  std::vector<int> labels;  // H*W, row-major
  std::size_t height = 0;
  std::size_t width = 0;
  std::string domain = "source";
};

struct SceneConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t classes = 5;
  std::size_t channels = 8;
  double pixel_noise = 0.02;
  /// Minimum pixel fraction of the spectrally confusable class pair
  /// (classes 1 and 2) enforced by the generator when classes >= 3.
  double min_pair_fraction = 0.10;
};

/// Per-class spectral signatures (classes x channels). All class pairs are
/// well separated except classes 1 and 2, which are closer than 0.05 in L2
/// but carry distinct shape statistics in generated scenes.
Tensor make_signatures(RngStream rng, std::size_t classes,
                       std::size_t channels);

SynthSample generate_scene(RngStream rng, const SceneConfig& cfg,
                           const Tensor& signatures);

/// Normalized Euclidean distance transform of the label boundary set.
Tensor structural_from_labels(const std::vector<int>& labels, std::size_t h,
                              std::size_t w);

/// Per-band multiplicative gain, additive bias, exponent and pixel noise
/// modelling a covariate-only spectral shift; labels and structural maps are
/// untouched by it.
struct DomainShift {
  Tensor gain;   // C
  Tensor bias;   // C
  Tensor gamma;  // C
  double noise_sigma = 0.02;
};

DomainShift identity_shift(std::size_t channels);
DomainShift make_default_shift(RngStream rng, std::size_t channels);

SynthSample apply_shift(const SynthSample& sample, const DomainShift& shift,
                        const RngStream& rng);

/// Majority class id per patch, ties toward the lowest class id.
std::vector<int> token_majority_labels(const std::vector<int>& labels,
                                       std::size_t h, std::size_t w,
                                       std::size_t patch, std::size_t classes);

// ---- evaluation -------------------------------------------------------------

struct EvalMetrics {
  std::vector<std::vector<std::uint64_t>> confusion;  // [truth][prediction]
  std::vector<double> per_class_iou;   // NaN where excluded
  std::vector<bool> iou_included;      // class present in truth or prediction
  std::vector<bool> acc_included;      // class present in truth
  double miou = 0.0;
  double macc = 0.0;
};

void accumulate_confusion(std::vector<std::vector<std::uint64_t>>& confusion,
                          const std::vector<int>& prediction,
                          const std::vector<int>& truth);
EvalMetrics metrics_from_confusion(
    const std::vector<std::vector<std::uint64_t>>& confusion);

/// Sample features honoring the stack's variant (no_structural zeroes the
/// structural stream before embedding); token labels filled from the sample.
SampleFeatures features_for(const AdapterStack& stack,
                            const FrozenBackbone& backbone,
                            const SynthSample& sample);

/// Per-pixel class prediction: evaluation-mode forward, per-token argmax
/// (ties toward the lowest class id) expanded over each patch.
std::vector<int> predict_pixels(const AdapterStack& stack,
                                const FrozenBackbone& backbone,
                                const SynthSample& sample);

/// Micro-accumulated confusion over the whole set; mIoU over classes present
/// in truth or prediction, mAcc over classes present in truth.
EvalMetrics evaluate(const AdapterStack& stack, const FrozenBackbone& backbone,
                     const std::vector<SynthSample>& samples);

// ---- datasets ---------------------------------------------------------------

struct DatasetConfig {
  SceneConfig scene;
  std::size_t source_scenes = 200;
  std::size_t target_scenes = 100;
  std::uint64_t seed = 1;
};

struct Dataset {
  DatasetConfig cfg;
  Tensor signatures;
  DomainShift shift;
  std::vector<SynthSample> source;
  std::vector<SynthSample> target;
};

/// Pure function of the config: source scenes, then independently drawn
/// target scenes passed through the default shift.
Dataset generate_dataset(const DatasetConfig& cfg);

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                  const std::string& config_hash);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace dgmoe
