#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "revis/matrix.hpp"
#include "revis/tensorio.hpp"

namespace revis {

struct DegenerateFlags {
  bool zero_prior = false;  // prior too small to define a direction; v_raw kept as is
  bool parallel = false;    // v_raw lies along v_prior; projection is zero

  bool any() const noexcept { return zero_prior || parallel; }
  bool operator==(const DegenerateFlags&) const = default;
};

struct OrthogonalizeResult {
  Vector vector;
  DegenerateFlags flags;
};

struct LayerVectors {
  Vector raw;
  Vector prior;
  Vector perp;
  double entanglement_cos = 0.0;
  DegenerateFlags flags;

  /// True when `perp` cannot be used for scoring or steering.
  bool degenerate() const noexcept;
};

/// Per-layer raw visual, language-prior and orthogonalized visual vectors.
struct SteeringVectorSet {
  std::size_t hidden_dim = 0;
  std::vector<LayerVectors> layers;

  std::size_t num_layers() const noexcept { return layers.size(); }
  const LayerVectors& at(std::size_t layer) const;
};

/// <a, b> / (|a| |b|) clamped to [-1, 1]; throws ZeroVector if either norm < 1e-12.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Mean over samples of GT - NOIMG_GT at `layer`.
Vector compute_raw_vector(const HiddenStateDump& dump, std::size_t layer);
/// Mean over samples of NOIMG_HALL - NOIMG_UNK at `layer`.
Vector compute_prior_vector(const HiddenStateDump& dump, std::size_t layer);

/// Removes the v_prior component from v_raw (single Gram-Schmidt step).
///
/// If |v_prior| < 1e-12 |v_raw| (or both vanish) the raw vector is returned
/// with `zero_prior` set. If the projected norm falls below 1e-9 |v_raw| the
/// result is the zero vector with `parallel` set. No renormalisation.
OrthogonalizeResult orthogonalize(std::span<const double> v_raw, std::span<const double> v_prior);

SteeringVectorSet build_vector_set(const HiddenStateDump& dump);

// Persistence: an HSD payload with one sample and conditions repurposed as
// vector roles (0 = v_raw, 1 = v_prior, 2 = v_perp), plus a JSON sidecar at
// `<path>.json` carrying norms, cosines and flags. The payload is f32, so a
// reloaded set carries f32-rounded vectors.
void save_vector_set(const SteeringVectorSet& set, const std::filesystem::path& path,
                     const std::string& model_name = "revis-vectors");
SteeringVectorSet load_vector_set(const std::filesystem::path& path);
std::filesystem::path vector_sidecar_path(const std::filesystem::path& payload_path);

}  // namespace revis
