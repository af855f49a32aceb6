#include "revis/steering.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "revis/error.hpp"
#include "revis/kernels.hpp"

namespace revis {

namespace {

using json = nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string_view steering_mode_name(SteeringMode mode) noexcept {
  switch (mode) {
    case SteeringMode::SparseGated: return "sparse";
    case SteeringMode::Dense: return "dense";
    case SteeringMode::Off: return "off";
  }
  return "?";
}

SteeringMode steering_mode_from_name(std::string_view name) {
  if (name == "sparse") return SteeringMode::SparseGated;
  if (name == "dense") return SteeringMode::Dense;
  if (name == "off") return SteeringMode::Off;
  throw Error(Errc::InvalidConfig, "steering mode must be sparse, dense or off; got '" + std::string(name) + "'");
}

void SteeringConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(Errc::InvalidConfig, "alpha must be finite and >= 0");
  if (mode == SteeringMode::SparseGated && (!layer || !tau))
    throw Error(Errc::InvalidConfig, "sparse-gated steering needs a resolved layer and tau");
}

SteeringConfig resolve(SteeringConfig config, const CalibrationProfile& profile) {
  if (!config.layer) config.layer = profile.selected_layer;
  if (!config.tau) config.tau = profile.tau;
  return config;
}

double gate(double risk, double tau, double alpha) noexcept { return risk > tau ? alpha : 0.0; }

void inject_inplace(std::span<double> h, std::span<const double> v, double lambda) {
  if (h.size() != v.size())
    throw Error(Errc::DimensionMismatch, "state has " + std::to_string(h.size()) + " dims, vector " +
                                             std::to_string(v.size()));
  if (lambda == 0.0) return;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += lambda * v[i];
}

Vector inject(std::span<const double> h, std::span<const double> v, double lambda) {
  Vector out(h.begin(), h.end());
  inject_inplace(out, v, lambda);
  return out;
}

StepSteerer::StepSteerer(const SteeringVectorSet* vectors, const SteeringConfig& config, std::size_t num_layers,
                         std::size_t t)
    : vectors_(vectors), config_(config) {
  config_.validate();
  if (config_.mode != SteeringMode::Off) {
    if (!vectors_) throw Error(Errc::InvalidConfig, "steering mode needs a vector set");
    if (vectors_->num_layers() != num_layers)
      throw Error(Errc::DimensionMismatch, "vector set has " + std::to_string(vectors_->num_layers()) +
                                               " layers, model has " + std::to_string(num_layers));
  }
  trace_.t = t;
  trace_.layer = config_.layer.value_or(num_layers == 0 ? 0 : num_layers - 1);
  if (trace_.layer >= num_layers)
    throw Error(Errc::InvalidConfig, "steering layer " + std::to_string(trace_.layer) + " >= " +
                                         std::to_string(num_layers) + " layers");
  trace_.risk = kNaN;
  trace_.post_risk = kNaN;
}

double StepSteerer::risk_or_nan(std::size_t layer, std::span<const double> state) const {
  if (!vectors_ || layer >= vectors_->num_layers() || vectors_->layers[layer].degenerate()) return kNaN;
  return risk_score(state, vectors_->layers[layer].perp);
}

void StepSteerer::apply(std::size_t layer, std::span<double> state) {
  const bool is_target = layer == trace_.layer;
  switch (config_.mode) {
    case SteeringMode::Off:
      if (is_target) {
        trace_.risk = risk_or_nan(layer, state);
        trace_.post_risk = trace_.risk;
      }
      return;

    case SteeringMode::SparseGated: {
      if (!is_target) return;
      const auto& lv = vectors_->at(layer);
      if (lv.degenerate()) {
        trace_.degenerate = true;
        return;
      }
      trace_.risk = risk_score(state, lv.perp);
      trace_.lambda = gate(trace_.risk, *config_.tau, config_.alpha);
      trace_.intervened = trace_.risk > *config_.tau;
      if (trace_.lambda != 0.0) {
        inject_inplace(state, lv.perp, trace_.lambda);
        ++trace_.layers_modified;
      }
      trace_.post_risk = risk_score(state, lv.perp);
      return;
    }

    case SteeringMode::Dense: {
      const auto& lv = vectors_->at(layer);
      if (is_target) {
        trace_.risk = risk_or_nan(layer, state);
        trace_.degenerate = lv.degenerate();
        trace_.intervened = true;
        trace_.lambda = config_.alpha;
      }
      if (config_.alpha != 0.0 && !lv.degenerate()) {
        inject_inplace(state, lv.perp, config_.alpha);
        ++trace_.layers_modified;
      }
      if (is_target) trace_.post_risk = risk_or_nan(layer, state);
      return;
    }
  }
}

SteerStepResult steer_step(const std::vector<Vector>& h_layers, const SteeringVectorSet& vectors,
                           const SteeringConfig& config, std::size_t t) {
  StepSteerer steerer(&vectors, config, h_layers.size(), t);
  SteerStepResult result{h_layers, {}};
  for (std::size_t layer = 0; layer < result.states.size(); ++layer) {
    if (config.mode != SteeringMode::Off && result.states[layer].size() != vectors.hidden_dim)
      throw Error(Errc::DimensionMismatch, "layer " + std::to_string(layer) + " state has wrong dimension");
    steerer.apply(layer, result.states[layer]);
  }
  result.trace = steerer.trace();
  return result;
}

void write_trace_jsonl(std::span<const StepTrace> traces, std::ostream& out) {
  for (const auto& tr : traces) {
    const json j = {{"t", tr.t},
                    {"risk", std::isfinite(tr.risk) ? json(tr.risk) : json(nullptr)},
                    {"lambda", tr.lambda},
                    {"intervened", tr.intervened},
                    {"layer", tr.layer}};
    out << j.dump() << '\n';
  }
}

std::vector<StepTrace> read_trace_jsonl(std::istream& in) {
  std::vector<StepTrace> traces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      StepTrace tr;
      tr.t = j.at("t").get<std::size_t>();
      tr.risk = j.at("risk").is_null() ? kNaN : j.at("risk").get<double>();
      tr.lambda = j.at("lambda").get<double>();
      tr.intervened = j.at("intervened").get<bool>();
      tr.layer = j.at("layer").get<std::size_t>();
      traces.push_back(tr);
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, "trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return traces;
}

}  // namespace revis
