#include "revis/vectors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "revis/error.hpp"
#include "revis/kernels.hpp"

namespace revis {

namespace {

using json = nlohmann::json;

constexpr double kZeroNorm = 1e-12;
constexpr double kZeroPriorRatio = 1e-12;
constexpr double kParallelRatio = 1e-9;

std::size_t require_condition(const HiddenStateDump& dump, ConditionLabel label) {
  auto idx = dump.metadata.condition_index(label);
  if (!idx) throw Error(Errc::MissingCondition, "dump lacks condition " + std::string(condition_name(label)));
  return *idx;
}

void require_layer(const HiddenStateDump& dump, std::size_t layer) {
  if (layer >= dump.metadata.num_layers)
    throw Error(Errc::DimensionMismatch, "layer " + std::to_string(layer) + " >= num_layers " +
                                             std::to_string(dump.metadata.num_layers));
}

Vector mean_difference(const HiddenStateDump& dump, ConditionLabel a, ConditionLabel b, std::size_t layer) {
  const auto ia = require_condition(dump, a);
  const auto ib = require_condition(dump, b);
  require_layer(dump, layer);
  Vector out(dump.metadata.hidden_dim);
  kernels::omp::mean_difference(dump, ia, ib, layer, out);
  return out;
}

}  // namespace

bool LayerVectors::degenerate() const noexcept {
  return flags.parallel || kernels::norm(perp) < kZeroNorm;
}

const LayerVectors& SteeringVectorSet::at(std::size_t layer) const {
  if (layer >= layers.size())
    throw Error(Errc::DimensionMismatch,
                "layer " + std::to_string(layer) + " >= vector set layers " + std::to_string(layers.size()));
  return layers[layer];
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "cosine of vectors with different lengths");
  const double na = kernels::norm(a);
  const double nb = kernels::norm(b);
  if (na < kZeroNorm || nb < kZeroNorm) throw Error(Errc::ZeroVector, "cosine with a zero-norm vector");
  return std::clamp(kernels::dot(a, b) / (na * nb), -1.0, 1.0);
}

Vector compute_raw_vector(const HiddenStateDump& dump, std::size_t layer) {
  return mean_difference(dump, ConditionLabel::GT, ConditionLabel::NOIMG_GT, layer);
}

Vector compute_prior_vector(const HiddenStateDump& dump, std::size_t layer) {
  return mean_difference(dump, ConditionLabel::NOIMG_HALL, ConditionLabel::NOIMG_UNK, layer);
}

OrthogonalizeResult orthogonalize(std::span<const double> v_raw, std::span<const double> v_prior) {
  if (v_raw.size() != v_prior.size())
    throw Error(Errc::DimensionMismatch, "v_raw has " + std::to_string(v_raw.size()) + " dims, v_prior has " +
                                             std::to_string(v_prior.size()));
  OrthogonalizeResult result;
  const double raw_norm = kernels::norm(v_raw);
  const double prior_norm = kernels::norm(v_prior);
  if (prior_norm == 0.0 || prior_norm < kZeroPriorRatio * raw_norm) {
    result.vector.assign(v_raw.begin(), v_raw.end());
    result.flags.zero_prior = true;
    return result;
  }

  // Project against the unit prior: same value as <r,p>/|p|^2 p without
  // squaring tiny or huge norms.
  Vector unit(v_prior.size());
  for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = v_prior[i] / prior_norm;
  const double coeff = kernels::dot(v_raw, unit);
  result.vector.resize(v_raw.size());
  for (std::size_t i = 0; i < unit.size(); ++i) result.vector[i] = v_raw[i] - coeff * unit[i];

  if (kernels::norm(result.vector) < kParallelRatio * raw_norm) {
    std::fill(result.vector.begin(), result.vector.end(), 0.0);
    result.flags.parallel = true;
  }
  return result;
}

SteeringVectorSet build_vector_set(const HiddenStateDump& dump) {
  for (auto label : {ConditionLabel::GT, ConditionLabel::NOIMG_GT, ConditionLabel::NOIMG_HALL,
                     ConditionLabel::NOIMG_UNK})
    require_condition(dump, label);

  SteeringVectorSet set;
  set.hidden_dim = dump.metadata.hidden_dim;
  set.layers.resize(dump.metadata.num_layers);
  for (std::size_t layer = 0; layer < set.layers.size(); ++layer) {
    auto& lv = set.layers[layer];
    lv.raw = compute_raw_vector(dump, layer);
    lv.prior = compute_prior_vector(dump, layer);
    auto ortho = orthogonalize(lv.raw, lv.prior);
    lv.perp = std::move(ortho.vector);
    lv.flags = ortho.flags;
    const bool defined = kernels::norm(lv.raw) >= kZeroNorm && kernels::norm(lv.prior) >= kZeroNorm;
    lv.entanglement_cos = defined ? cosine_similarity(lv.raw, lv.prior) : 0.0;
  }
  return set;
}

std::filesystem::path vector_sidecar_path(const std::filesystem::path& payload_path) {
  auto p = payload_path;
  p += ".json";
  return p;
}

void save_vector_set(const SteeringVectorSet& set, const std::filesystem::path& path, const std::string& model_name) {
  DumpMetadata meta;
  meta.model_name = model_name;
  meta.num_layers = set.num_layers();
  meta.hidden_dim = set.hidden_dim;
  meta.num_samples = 1;
  // Condition codes double as vector roles here.
  meta.conditions_present = {ConditionLabel::GT, ConditionLabel::HALL, ConditionLabel::NOIMG_GT};
  auto dump = HiddenStateDump::zeros(meta);
  for (std::size_t layer = 0; layer < set.num_layers(); ++layer) {
    const auto& lv = set.layers[layer];
    const Vector* roles[] = {&lv.raw, &lv.prior, &lv.perp};
    for (std::size_t r = 0; r < 3; ++r) {
      if (roles[r]->size() != set.hidden_dim) throw Error(Errc::DimensionMismatch, "vector length != hidden_dim");
      auto dst = dump.state(0, r, layer);
      std::transform(roles[r]->begin(), roles[r]->end(), dst.begin(), [](double v) { return static_cast<float>(v); });
    }
  }
  save_dump(dump, path);

  json side;
  side["hidden_dim"] = set.hidden_dim;
  side["num_layers"] = set.num_layers();
  side["roles"] = {"v_raw", "v_prior", "v_vis_perp"};
  json layers = json::array();
  for (std::size_t layer = 0; layer < set.num_layers(); ++layer) {
    const auto& lv = set.layers[layer];
    layers.push_back({{"layer", layer},
                      {"norm_raw", kernels::norm(lv.raw)},
                      {"norm_prior", kernels::norm(lv.prior)},
                      {"norm_perp", kernels::norm(lv.perp)},
                      {"entanglement_cos", lv.entanglement_cos},
                      {"zero_prior", lv.flags.zero_prior},
                      {"parallel", lv.flags.parallel}});
  }
  side["layers"] = std::move(layers);
  std::ofstream out(vector_sidecar_path(path));
  out << side.dump(2) << '\n';
  if (!out) throw Error(Errc::SinkFailure, "cannot write " + vector_sidecar_path(path).string());
}

SteeringVectorSet load_vector_set(const std::filesystem::path& path) {
  const auto dump = load_dump(path);
  const auto& m = dump.metadata;
  const std::vector<ConditionLabel> roles = {ConditionLabel::GT, ConditionLabel::HALL, ConditionLabel::NOIMG_GT};
  if (m.num_samples != 1 || m.conditions_present != roles)
    throw Error(Errc::ShapeMismatch, path.string() + " is not a vector-set payload (need 1 sample, roles 0,1,2)");

  std::ifstream in(vector_sidecar_path(path));
  if (!in) throw Error(Errc::IoError, "missing sidecar " + vector_sidecar_path(path).string());
  json side;
  try {
    side = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedHeader, "sidecar: " + std::string(e.what()));
  }
  if (!side.contains("layers") || !side["layers"].is_array() || side["layers"].size() != m.num_layers)
    throw Error(Errc::ShapeMismatch, "sidecar layer count disagrees with payload");

  SteeringVectorSet set;
  set.hidden_dim = m.hidden_dim;
  set.layers.resize(m.num_layers);
  for (std::size_t layer = 0; layer < m.num_layers; ++layer) {
    auto& lv = set.layers[layer];
    Vector* dst[] = {&lv.raw, &lv.prior, &lv.perp};
    for (std::size_t r = 0; r < 3; ++r) {
      auto src = dump.state(0, r, layer);
      dst[r]->assign(src.begin(), src.end());
    }
    try {
      const auto& entry = side["layers"][layer];
      lv.entanglement_cos = entry.at("entanglement_cos").get<double>();
      lv.flags.zero_prior = entry.at("zero_prior").get<bool>();
      lv.flags.parallel = entry.at("parallel").get<bool>();
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedHeader, "sidecar layer " + std::to_string(layer) + ": " + e.what());
    }
  }
  return set;
}

}  // namespace revis
