#include "revis/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "revis/error.hpp"
#include "revis/kernels.hpp"
#include "revis/rng.hpp"

namespace revis {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kDirectionStream = 0x5EEDD1E5ULL;
constexpr std::uint64_t kSampleStream = 0x5A3B1E5ULL;

Vector random_unit(SplitMix64& rng, std::size_t dim) {
  Vector v(dim);
  double n = 0.0;
  do {
    for (auto& x : v) x = rng.normal();
    n = kernels::norm(v);
  } while (n < 1e-8);
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

void SyntheticWorldSpec::validate(std::size_t dim) const {
  if (num_samples < 1) throw Error(Errc::InvalidSpec, "num_samples must be >= 1");
  if (dim < 1) throw Error(Errc::InvalidSpec, "hidden_dim must be >= 1");
  if (planted_visual_dir.size() != dim || planted_prior_dir.size() != dim)
    throw Error(Errc::InvalidSpec, "planted directions must have hidden_dim entries");
  if (!(entanglement >= 0.0 && entanglement <= 1.0)) throw Error(Errc::InvalidSpec, "entanglement must lie in [0, 1]");
  if (!(noise_scale >= 0.0) || !(base_scale >= 0.0)) throw Error(Errc::InvalidSpec, "scales must be >= 0");
  if (!(band_start_fraction >= 0.0 && band_start_fraction < 1.0))
    throw Error(Errc::InvalidSpec, "band_start_fraction must lie in [0, 1)");
  if (!(separation > 0.0 && separation <= 1.0)) throw Error(Errc::InvalidSpec, "separation must lie in (0, 1]");
  if (std::abs(kernels::norm(planted_visual_dir) - 1.0) > 1e-9 || std::abs(kernels::norm(planted_prior_dir) - 1.0) > 1e-9)
    throw Error(Errc::InvalidSpec, "planted directions must be unit norm");
  if (std::abs(kernels::dot(planted_visual_dir, planted_prior_dir) - entanglement) > 1e-6)
    throw Error(Errc::InvalidSpec, "cosine of planted directions differs from entanglement");
}

SyntheticWorldSpec make_world(std::size_t num_samples, std::size_t dim, double entanglement, double noise_scale,
                              std::uint64_t seed) {
  if (dim < 2 && entanglement < 1.0) throw Error(Errc::InvalidSpec, "need hidden_dim >= 2 for entanglement < 1");
  if (!(entanglement >= 0.0 && entanglement <= 1.0)) throw Error(Errc::InvalidSpec, "entanglement must lie in [0, 1]");
  SyntheticWorldSpec w;
  w.num_samples = num_samples;
  w.entanglement = entanglement;
  w.noise_scale = noise_scale;
  w.seed = seed;

  SplitMix64 rng(seed ^ kDirectionStream);
  w.planted_visual_dir = random_unit(rng, dim);
  Vector other(dim, 0.0);
  if (dim >= 2) {
    double n = 0.0;
    do {
      other = random_unit(rng, dim);
      const double c = kernels::dot(other, w.planted_visual_dir);
      for (std::size_t i = 0; i < dim; ++i) other[i] -= c * w.planted_visual_dir[i];
      n = kernels::norm(other);
    } while (n < 1e-6);
    for (auto& x : other) x /= n;
  }
  const double s = std::sqrt(1.0 - entanglement * entanglement);
  w.planted_prior_dir.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) w.planted_prior_dir[i] = entanglement * w.planted_visual_dir[i] + s * other[i];
  const double pn = kernels::norm(w.planted_prior_dir);
  for (auto& x : w.planted_prior_dir) x /= pn;
  return w;
}

LayerBand separable_band(const SyntheticWorldSpec& world, std::size_t layers) {
  auto first = static_cast<std::size_t>(std::floor(world.band_start_fraction * static_cast<double>(layers)));
  first = std::min(first, layers == 0 ? 0 : layers - 1);
  return {first, layers};
}

SyntheticWorldSpec scale_world(SyntheticWorldSpec world, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw Error(Errc::InvalidSpec, "scale must be finite and > 0");
  world.visual_gain *= factor;
  world.prior_gain *= factor;
  world.base_scale *= factor;
  world.noise_scale *= factor;
  return world;
}

Vector prior_orthogonal_visual_dir(const SyntheticWorldSpec& world) {
  const auto& u = world.planted_visual_dir;
  const auto& p = world.planted_prior_dir;
  const double c = kernels::dot(u, p) / kernels::dot(p, p);
  Vector out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] - c * p[i];
  const double n = kernels::norm(out);
  if (n > 0.0)
    for (auto& x : out) x /= n;
  return out;
}

HiddenStateDump synthesize_counterfactual_dump(const SyntheticWorldSpec& world, std::size_t layers, std::size_t dim) {
  if (layers < 1) throw Error(Errc::InvalidSpec, "num_layers must be >= 1");
  world.validate(dim);

  DumpMetadata meta;
  meta.model_name = "synthetic";
  meta.num_layers = layers;
  meta.hidden_dim = dim;
  meta.num_samples = world.num_samples;
  meta.conditions_present.assign(kAllConditions.begin(), kAllConditions.end());
  auto dump = HiddenStateDump::zeros(std::move(meta));

  const auto band = separable_band(world, layers);
  const auto& uv = world.planted_visual_dir;
  const auto& up = world.planted_prior_dir;
  const SplitMix64 root(world.seed ^ kSampleStream);

  Vector base(dim);
  for (std::size_t i = 0; i < world.num_samples; ++i) {
    auto rng = root.fork(i);
    for (std::size_t l = 0; l < layers; ++l) {
      const double a = world.visual_gain * static_cast<double>(l + 1) / static_cast<double>(layers);
      const double s = band.contains(l) ? world.separation * static_cast<double>(l - band.first + 1) /
                                              static_cast<double>(band.end - band.first)
                                        : 0.0;
      const double g = world.prior_gain;
      for (auto& x : base) x = world.base_scale * rng.normal();

      for (std::size_t c = 0; c < kNumConditionLabels; ++c) {
        double vis = 0.0;
        double prior = 0.0;
        switch (static_cast<ConditionLabel>(c)) {
          case ConditionLabel::GT: vis = a; break;
          case ConditionLabel::HALL: vis = a * (1.0 - s), prior = s * g; break;
          case ConditionLabel::NOIMG_GT: break;
          case ConditionLabel::NOIMG_HALL: prior = g; break;
          case ConditionLabel::NOIMG_UNK: break;
        }
        auto dst = dump.state(i, c, l);
        for (std::size_t j = 0; j < dim; ++j) {
          double v = base[j] + vis * uv[j] + prior * up[j];
          if (world.noise_scale > 0.0) v += world.noise_scale * rng.normal();
          dst[j] = static_cast<float>(v);
        }
      }
    }
  }
  return dump;
}

WorldConfig world_config_from_json(const json& j, std::uint64_t default_seed) {
  if (!j.is_object()) throw Error(Errc::InvalidSpec, "world config must be a JSON object");
  WorldConfig cfg;
  try {
    const auto num_samples = j.value("num_samples", std::size_t{100});
    cfg.num_layers = j.value("num_layers", cfg.num_layers);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    const double entanglement = j.value("entanglement", 0.0);
    const double noise = j.value("noise_scale", 0.0);
    const auto seed = j.value("seed", default_seed);
    if (num_samples < 1) throw Error(Errc::InvalidSpec, "num_samples must be >= 1");
    cfg.world = make_world(num_samples, cfg.hidden_dim, entanglement, noise, seed);
    auto& w = cfg.world;
    w.band_start_fraction = j.value("band_start_fraction", w.band_start_fraction);
    w.separation = j.value("separation", w.separation);
    w.visual_gain = j.value("visual_gain", w.visual_gain);
    w.prior_gain = j.value("prior_gain", w.prior_gain);
    w.base_scale = j.value("base_scale", w.base_scale);
    if (j.contains("planted_visual_dir")) w.planted_visual_dir = j.at("planted_visual_dir").get<Vector>();
    if (j.contains("planted_prior_dir")) w.planted_prior_dir = j.at("planted_prior_dir").get<Vector>();
    if (j.contains("scale")) w = scale_world(w, j.at("scale").get<double>());
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
  cfg.world.validate(cfg.hidden_dim);
  return cfg;
}

}  // namespace revis
