#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "revis/matrix.hpp"
#include "revis/tensorio.hpp"
#include "revis/vectors.hpp"

namespace revis {

/// Hidden states of correct (fact) and incorrect (hall) probe responses, one
/// matrix per layer with one state per row.
struct CalibrationStates {
  std::vector<Matrix> fact;
  std::vector<Matrix> hall;

  std::size_t num_layers() const noexcept { return fact.size(); }

  /// Every (sample, condition) entry of `fact_dump` / `hall_dump` is one state.
  static CalibrationStates from_dumps(const HiddenStateDump& fact_dump, const HiddenStateDump& hall_dump);
  /// GT rows become fact states and HALL rows hall states.
  static CalibrationStates from_paired_dump(const HiddenStateDump& dump);
};

enum class SelectionMode { Deepest, Argmax };

std::string_view selection_mode_name(SelectionMode mode) noexcept;
SelectionMode selection_mode_from_name(std::string_view name);

struct CalibrationProfile {
  std::vector<double> delta;  // NaN where the layer's vector is degenerate
  std::size_t selected_layer = 0;
  double tau = 0.0;
  double k = 0.8;
  SelectionMode mode = SelectionMode::Deepest;
  std::vector<double> fact_risk_sample;  // sorted ascending; not persisted
};

inline constexpr double kDefaultPercentile = 0.8;

/// -cos(h, v).
double risk_score(std::span<const double> h, std::span<const double> v);

/// Risk of every row of `states` against `v`.
std::vector<double> risk_scores(const Matrix& states, std::span<const double> v);

/// Mean hall risk minus mean fact risk at `layer`.
double layer_delta(const CalibrationStates& states, const SteeringVectorSet& vectors, std::size_t layer);

/// Backward scan over `delta`: deepest index with delta > 0 whose `skip` entry
/// is false. Argmax mode picks the largest positive delta, ties to the deeper
/// layer. Throws NoSeparableLayer when no layer qualifies.
std::size_t select_layer_from_deltas(std::span<const double> delta, const std::vector<bool>& skip,
                                     SelectionMode mode = SelectionMode::Deepest);

std::size_t select_layer(const CalibrationStates& states, const SteeringVectorSet& vectors,
                         SelectionMode mode = SelectionMode::Deepest);

/// k-quantile with linear interpolation between closest ranks, p = k (n - 1).
double compute_threshold(std::span<const double> fact_risks, double k);

CalibrationProfile calibrate(const CalibrationStates& states, const SteeringVectorSet& vectors,
                             double k = kDefaultPercentile, SelectionMode mode = SelectionMode::Deepest);

void save_profile(const CalibrationProfile& profile, const std::filesystem::path& path);
CalibrationProfile load_profile(const std::filesystem::path& path);

}  // namespace revis
