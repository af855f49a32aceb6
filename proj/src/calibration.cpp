#include "revis/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "revis/error.hpp"
#include "revis/kernels.hpp"

namespace revis {

namespace {

using json = nlohmann::json;

std::vector<Matrix> layer_matrices(const HiddenStateDump& dump, std::span<const std::size_t> cond_indices) {
  const auto& m = dump.metadata;
  std::vector<Matrix> out(m.num_layers);
  for (std::size_t layer = 0; layer < m.num_layers; ++layer) {
    out[layer].cols = m.hidden_dim;
    for (std::size_t i = 0; i < m.num_samples; ++i)
      for (auto c : cond_indices) out[layer].append_row(dump.state(i, c, layer));
  }
  return out;
}

std::vector<std::size_t> all_conditions(const DumpMetadata& m) {
  std::vector<std::size_t> idx(m.num_conditions());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

double mean(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

std::vector<double> deltas_or_nan(const CalibrationStates& states, const SteeringVectorSet& vectors,
                                  std::vector<bool>& skip) {
  if (states.fact.size() != vectors.num_layers() || states.hall.size() != vectors.num_layers())
    throw Error(Errc::DimensionMismatch, "calibration states cover " + std::to_string(states.fact.size()) +
                                             " layers, vector set has " + std::to_string(vectors.num_layers()));
  std::vector<double> delta(vectors.num_layers(), std::numeric_limits<double>::quiet_NaN());
  skip.assign(vectors.num_layers(), false);
  for (std::size_t layer = 0; layer < vectors.num_layers(); ++layer) {
    if (vectors.layers[layer].degenerate()) {
      skip[layer] = true;
      continue;
    }
    delta[layer] = layer_delta(states, vectors, layer);
  }
  return delta;
}

}  // namespace

CalibrationStates CalibrationStates::from_dumps(const HiddenStateDump& fact_dump, const HiddenStateDump& hall_dump) {
  const auto& fm = fact_dump.metadata;
  const auto& hm = hall_dump.metadata;
  if (fm.num_layers != hm.num_layers || fm.hidden_dim != hm.hidden_dim)
    throw Error(Errc::DimensionMismatch, "fact and hall dumps disagree on layers or hidden_dim");
  CalibrationStates s;
  s.fact = layer_matrices(fact_dump, all_conditions(fm));
  s.hall = layer_matrices(hall_dump, all_conditions(hm));
  return s;
}

CalibrationStates CalibrationStates::from_paired_dump(const HiddenStateDump& dump) {
  const auto gt = dump.metadata.condition_index(ConditionLabel::GT);
  const auto hall = dump.metadata.condition_index(ConditionLabel::HALL);
  if (!gt || !hall) throw Error(Errc::MissingCondition, "paired calibration dump needs GT and HALL conditions");
  CalibrationStates s;
  const std::size_t f[] = {*gt};
  const std::size_t h[] = {*hall};
  s.fact = layer_matrices(dump, f);
  s.hall = layer_matrices(dump, h);
  return s;
}

std::string_view selection_mode_name(SelectionMode mode) noexcept {
  return mode == SelectionMode::Deepest ? "deepest" : "argmax";
}

SelectionMode selection_mode_from_name(std::string_view name) {
  if (name == "deepest") return SelectionMode::Deepest;
  if (name == "argmax") return SelectionMode::Argmax;
  throw Error(Errc::InvalidConfig, "selection mode must be 'deepest' or 'argmax', got '" + std::string(name) + "'");
}

double risk_score(std::span<const double> h, std::span<const double> v) { return -cosine_similarity(h, v); }

std::vector<double> risk_scores(const Matrix& states, std::span<const double> v) {
  if (states.cols != v.size() && !states.empty())
    throw Error(Errc::DimensionMismatch, "state dim " + std::to_string(states.cols) + " != vector dim " +
                                             std::to_string(v.size()));
  const double vn = kernels::norm(v);
  if (vn < 1e-12) throw Error(Errc::ZeroVector, "risk against a zero-norm vector");
  std::vector<double> out(states.rows);
  kernels::omp::risk_scores(states, v, vn, out);
  if (std::any_of(out.begin(), out.end(), [](double r) { return std::isnan(r); }))
    throw Error(Errc::ZeroVector, "zero-norm hidden state in calibration set");
  return out;
}

double layer_delta(const CalibrationStates& states, const SteeringVectorSet& vectors, std::size_t layer) {
  if (layer >= states.fact.size() || layer >= states.hall.size())
    throw Error(Errc::EmptyStateSet, "no calibration states for layer " + std::to_string(layer));
  const auto& lv = vectors.at(layer);
  if (lv.degenerate())
    throw Error(Errc::DegenerateVector, "orthogonalized vector at layer " + std::to_string(layer) + " is zero");
  const auto& fact = states.fact[layer];
  const auto& hall = states.hall[layer];
  if (fact.empty() || hall.empty())
    throw Error(Errc::EmptyStateSet, "layer " + std::to_string(layer) + " needs at least one fact and hall state");
  const auto fact_risk = risk_scores(fact, lv.perp);
  const auto hall_risk = risk_scores(hall, lv.perp);
  return mean(hall_risk) - mean(fact_risk);
}

std::size_t select_layer_from_deltas(std::span<const double> delta, const std::vector<bool>& skip,
                                     SelectionMode mode) {
  if (!skip.empty() && skip.size() != delta.size())
    throw Error(Errc::DimensionMismatch, "skip mask length != delta length");
  const auto usable = [&](std::size_t l) { return (skip.empty() || !skip[l]) && delta[l] > 0.0; };

  if (mode == SelectionMode::Deepest) {
    for (std::size_t l = delta.size(); l-- > 0;)
      if (usable(l)) return l;
  } else {
    std::optional<std::size_t> best;
    for (std::size_t l = delta.size(); l-- > 0;)
      if (usable(l) && (!best || delta[l] > delta[*best])) best = l;
    if (best) return *best;
  }
  throw Error(Errc::NoSeparableLayer, "no layer has positive separability");
}

std::size_t select_layer(const CalibrationStates& states, const SteeringVectorSet& vectors, SelectionMode mode) {
  std::vector<bool> skip;
  const auto delta = deltas_or_nan(states, vectors, skip);
  return select_layer_from_deltas(delta, skip, mode);
}

double compute_threshold(std::span<const double> fact_risks, double k) {
  if (fact_risks.empty()) throw Error(Errc::EmptySample, "no factual risk scores");
  if (!(k > 0.0 && k < 1.0)) throw Error(Errc::KOutOfRange, "k must lie in (0, 1), got " + std::to_string(k));
  std::vector<double> s(fact_risks.begin(), fact_risks.end());
  if (std::any_of(s.begin(), s.end(), [](double r) { return !std::isfinite(r); }))
    throw Error(Errc::InvariantViolation, "non-finite risk score");
  std::sort(s.begin(), s.end());

  const double p = k * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(p));
  if (lo + 1 >= s.size()) return s.back();
  const double frac = p - static_cast<double>(lo);
  const double tau = s[lo] + frac * (s[lo + 1] - s[lo]);
  return std::clamp(tau, s[lo], s[lo + 1]);
}

CalibrationProfile calibrate(const CalibrationStates& states, const SteeringVectorSet& vectors, double k,
                             SelectionMode mode) {
  if (!(k > 0.0 && k < 1.0)) throw Error(Errc::KOutOfRange, "k must lie in (0, 1), got " + std::to_string(k));
  CalibrationProfile profile;
  profile.k = k;
  profile.mode = mode;
  std::vector<bool> skip;
  profile.delta = deltas_or_nan(states, vectors, skip);
  profile.selected_layer = select_layer_from_deltas(profile.delta, skip, mode);

  profile.fact_risk_sample = risk_scores(states.fact[profile.selected_layer], vectors.layers[profile.selected_layer].perp);
  std::sort(profile.fact_risk_sample.begin(), profile.fact_risk_sample.end());
  profile.tau = compute_threshold(profile.fact_risk_sample, k);
  return profile;
}

void save_profile(const CalibrationProfile& profile, const std::filesystem::path& path) {
  json delta = json::array();
  for (double d : profile.delta) delta.push_back(std::isfinite(d) ? json(d) : json(nullptr));
  const json j = {{"k", profile.k},
                  {"selected_layer", profile.selected_layer},
                  {"tau", profile.tau},
                  {"delta", std::move(delta)},
                  {"selection_mode", selection_mode_name(profile.mode)}};
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::SinkFailure, "cannot write " + path.string());
}

CalibrationProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  CalibrationProfile p;
  try {
    const json j = json::parse(in);
    p.k = j.at("k").get<double>();
    p.selected_layer = j.at("selected_layer").get<std::size_t>();
    p.tau = j.at("tau").get<double>();
    for (const auto& d : j.at("delta"))
      p.delta.push_back(d.is_null() ? std::numeric_limits<double>::quiet_NaN() : d.get<double>());
    p.mode = selection_mode_from_name(j.at("selection_mode").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  if (p.selected_layer >= p.delta.size())
    throw Error(Errc::ParseError, path.string() + ": selected_layer outside delta range");
  return p;
}

}  // namespace revis
