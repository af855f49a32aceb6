#pragma once

// Synthetic counterfactual worlds with planted visual and prior directions.
//
// Per sample i and layer l, with a shared base state b and fresh noise n per
// condition:
//   GT         = b + a(l) u_vis                                  + n
//   HALL       = b + a(l) (1 - s(l)) u_vis + s(l) g_prior u_prior + n
//   NOIMG_GT   = b                                               + n
//   NOIMG_HALL = b + g_prior u_prior                             + n
//   NOIMG_UNK  = b                                               + n
// a(l) = g_vis (l + 1) / L ramps with depth. s(l) is zero below the band
// start and ramps linearly to `separation` at the last layer, so GT/HALL
// used as fact/hall calibration states separate only inside the band.

#include <cstddef>
#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "revis/matrix.hpp"
#include "revis/tensorio.hpp"

namespace revis {

struct SyntheticWorldSpec {
  std::size_t num_samples = 100;
  Vector planted_visual_dir;
  Vector planted_prior_dir;
  double entanglement = 0.0;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;

  double band_start_fraction = 0.5;
  double separation = 0.6;
  double visual_gain = 1.0;
  double prior_gain = 1.0;
  double base_scale = 0.1;

  /// Throws InvalidSpec.
  void validate(std::size_t dim) const;
};

/// Draws unit planted directions with cos(u_vis, u_prior) == entanglement.
SyntheticWorldSpec make_world(std::size_t num_samples, std::size_t dim, double entanglement, double noise_scale,
                              std::uint64_t seed);

struct LayerBand {
  std::size_t first = 0;
  std::size_t end = 0;  // exclusive
  bool contains(std::size_t layer) const noexcept { return layer >= first && layer < end; }
};

LayerBand separable_band(const SyntheticWorldSpec& world, std::size_t layers);

/// Multiplies gains, base and noise by `factor`: the same world expressed in
/// other units. Cosines, deltas, tau and the selected layer are unchanged.
SyntheticWorldSpec scale_world(SyntheticWorldSpec world, double factor);

/// Unit vector along u_vis with its u_prior component removed.
Vector prior_orthogonal_visual_dir(const SyntheticWorldSpec& world);

HiddenStateDump synthesize_counterfactual_dump(const SyntheticWorldSpec& world, std::size_t layers, std::size_t dim);

/// Reads num_samples, hidden_dim, num_layers, entanglement, noise_scale,
/// seed and the optional shape knobs, then applies the optional "scale"; planted directions are drawn from the
/// seed unless given explicitly. Returns the world and (layers, dim).
struct WorldConfig {
  SyntheticWorldSpec world;
  std::size_t num_layers = 8;
  std::size_t hidden_dim = 32;
};
WorldConfig world_config_from_json(const nlohmann::json& j, std::uint64_t default_seed);

}  // namespace revis
