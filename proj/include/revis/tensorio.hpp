#pragma once

// Hidden-state dump (HSD) container.
//
// Layout, all integers little-endian:
//   [0, 8)        ASCII magic "REVISHSD"
//   [8, 12)       u32 format version (currently 1)
//   [12, 16)      u32 J, length of the metadata JSON
//   [16, 16 + J)  UTF-8 JSON object: model_name, num_layers, hidden_dim,
//                 num_samples, conditions (ints 0-4), dtype ("f32le")
//   remainder     N * C * L * d little-endian f32 values ordered
//                 sample-major, then condition, then layer, then dim

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace revis {

enum class ConditionLabel : std::uint8_t {
  GT = 0,          // image + ground-truth caption
  HALL = 1,        // image + hallucinated caption
  NOIMG_GT = 2,    // no image + ground-truth caption
  NOIMG_HALL = 3,  // no image + hallucinated caption
  NOIMG_UNK = 4,   // no image + refusal response
};

inline constexpr std::size_t kNumConditionLabels = 5;
inline constexpr std::array<ConditionLabel, kNumConditionLabels> kAllConditions = {
    ConditionLabel::GT, ConditionLabel::HALL, ConditionLabel::NOIMG_GT,
    ConditionLabel::NOIMG_HALL, ConditionLabel::NOIMG_UNK};

std::string_view condition_name(ConditionLabel label) noexcept;
/// Throws Error(MalformedHeader) for codes outside 0-4.
ConditionLabel condition_from_code(int code);

inline constexpr std::string_view kHsdMagic = "REVISHSD";
inline constexpr std::uint32_t kHsdVersion = 1;
inline constexpr std::string_view kHsdDtype = "f32le";

struct DumpMetadata {
  std::uint32_t format_version = kHsdVersion;
  std::string model_name;
  std::size_t num_layers = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_samples = 0;
  std::vector<ConditionLabel> conditions_present;

  std::size_t num_conditions() const noexcept { return conditions_present.size(); }
  std::size_t element_count() const noexcept {
    return num_samples * num_conditions() * num_layers * hidden_dim;
  }
  std::optional<std::size_t> condition_index(ConditionLabel label) const noexcept;

  bool operator==(const DumpMetadata&) const = default;
};

/// Last-token hidden states indexed (sample, condition, layer, dim).
struct HiddenStateDump {
  DumpMetadata metadata;
  std::vector<float> states;

  std::size_t offset(std::size_t sample, std::size_t cond_index, std::size_t layer) const noexcept {
    const auto& m = metadata;
    return ((sample * m.num_conditions() + cond_index) * m.num_layers + layer) * m.hidden_dim;
  }
  std::span<const float> state(std::size_t sample, std::size_t cond_index, std::size_t layer) const {
    return {states.data() + offset(sample, cond_index, layer), metadata.hidden_dim};
  }
  std::span<float> state(std::size_t sample, std::size_t cond_index, std::size_t layer) {
    return {states.data() + offset(sample, cond_index, layer), metadata.hidden_dim};
  }

  /// Allocates a zero-filled dump for the given metadata.
  static HiddenStateDump zeros(DumpMetadata metadata);

  /// Throws Error(InvariantViolation) on bad dims, duplicate conditions,
  /// element-count mismatch, or non-finite values.
  void validate() const;

  bool operator==(const HiddenStateDump&) const = default;
};

void write_dump(const HiddenStateDump& dump, std::ostream& sink);
HiddenStateDump read_dump(std::istream& source);

/// Parses a complete in-memory HSD image; trailing bytes are rejected.
HiddenStateDump parse_dump(std::span<const std::byte> bytes);
std::vector<std::byte> serialize_dump(const HiddenStateDump& dump);

void save_dump(const HiddenStateDump& dump, const std::filesystem::path& path);
HiddenStateDump load_dump(const std::filesystem::path& path);

/// Header only; the payload is not read or validated.
DumpMetadata read_dump_header(std::istream& source);

}  // namespace revis
