// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dgmoe/tensor.hpp"

namespace dgmoe {

// "SMTX" binary tensor format: magic bytes `SMTX`, version u8 = 1, rank u8,
// rank x u64 little-endian dims, then the row-major f32 little-endian
// payload. Internal f64 values are narrowed on save and widened on load.

void save_smtx(const std::filesystem::path& path, const Tensor& t);
Tensor load_smtx(const std::filesystem::path& path);

/// Ordered plain-text key=value manifest used as a sidecar for serialized
/// parameter groups, datasets, and checkpoints.
using Manifest = std::vector<std::pair<std::string, std::string>>;

void save_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest load_manifest(const std::filesystem::path& path);
const std::string& manifest_get(const Manifest& m, const std::string& key);
bool manifest_has(const Manifest& m, const std::string& key);

/// Deterministic double formatting that round-trips exactly (%.17g).
std::string format_double(double v);

}  // namespace dgmoe
