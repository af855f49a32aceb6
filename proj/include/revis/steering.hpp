#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "revis/calibration.hpp"
#include "revis/matrix.hpp"
#include "revis/vectors.hpp"

namespace revis {

enum class SteeringMode { SparseGated, Dense, Off };

std::string_view steering_mode_name(SteeringMode mode) noexcept;
/// Accepts "sparse", "dense", "off".
SteeringMode steering_mode_from_name(std::string_view name);

inline constexpr double kDefaultAlpha = 1.6;

struct SteeringConfig {
  double alpha = kDefaultAlpha;
  SteeringMode mode = SteeringMode::SparseGated;
  std::optional<std::size_t> layer;  // nullopt = auto, taken from the profile
  std::optional<double> tau;         // ignored outside SparseGated

  /// Throws InvalidConfig for alpha < 0 or an unresolved SparseGated config.
  void validate() const;
};

/// Fills an auto layer and a missing tau from the calibration profile.
SteeringConfig resolve(SteeringConfig config, const CalibrationProfile& profile);

struct StepTrace {
  std::size_t t = 0;
  double risk = 0.0;  // pre-injection risk at `layer`; NaN if undefined
  double lambda = 0.0;
  bool intervened = false;
  std::size_t layer = 0;
  bool degenerate = false;  // target vector was zero; step was a no-op
  double post_risk = 0.0;   // risk of the state handed to the next layer
  std::size_t layers_modified = 0;
};

/// alpha if risk > tau (strict), else 0.
double gate(double risk, double tau, double alpha) noexcept;

Vector inject(std::span<const double> h, std::span<const double> v, double lambda);
void inject_inplace(std::span<double> h, std::span<const double> v, double lambda);

/// Per-step steering state driven layer by layer, in increasing layer order,
/// from inside a forward pass. `vectors` may be null only in Off mode.
class StepSteerer {
 public:
  StepSteerer(const SteeringVectorSet* vectors, const SteeringConfig& config, std::size_t num_layers, std::size_t t);

  /// Applies the mode's rule to the output state of `layer`, in place.
  void apply(std::size_t layer, std::span<double> state);

  const StepTrace& trace() const noexcept { return trace_; }

 private:
  double risk_or_nan(std::size_t layer, std::span<const double> state) const;

  const SteeringVectorSet* vectors_;
  SteeringConfig config_;
  StepTrace trace_;
};

struct SteerStepResult {
  std::vector<Vector> states;
  StepTrace trace;
};

/// Applies one step of steering to already-computed per-layer states. The
/// layers are treated independently (no forward propagation).
SteerStepResult steer_step(const std::vector<Vector>& h_layers, const SteeringVectorSet& vectors,
                           const SteeringConfig& config, std::size_t t = 0);

/// One JSON object per line: {"t","risk","lambda","intervened","layer"}.
void write_trace_jsonl(std::span<const StepTrace> traces, std::ostream& out);
std::vector<StepTrace> read_trace_jsonl(std::istream& in);

}  // namespace revis
