#include "revis/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "revis/error.hpp"

namespace revis {

namespace {

using json = nlohmann::json;

constexpr std::size_t kFixedHeaderBytes = 16;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> b) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::size_t checked_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a)
    throw Error(Errc::ShapeMismatch, "header dimensions overflow");
  return a * b;
}

std::size_t positive_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::MalformedHeader, std::string("missing key '") + key + "'");
  if (!it->is_number_integer()) throw Error(Errc::MalformedHeader, std::string("'") + key + "' must be an integer");
  const auto v = it->get<std::int64_t>();
  if (v < 1) throw Error(Errc::InvariantViolation, std::string("'") + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

DumpMetadata parse_metadata(std::uint32_t version, std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedHeader, std::string("metadata is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::MalformedHeader, "metadata must be a JSON object");

  DumpMetadata m;
  m.format_version = version;
  auto name = j.find("model_name");
  if (name == j.end() || !name->is_string()) throw Error(Errc::MalformedHeader, "'model_name' must be a string");
  m.model_name = name->get<std::string>();
  m.num_layers = positive_field(j, "num_layers");
  m.hidden_dim = positive_field(j, "hidden_dim");
  m.num_samples = positive_field(j, "num_samples");

  auto dtype = j.find("dtype");
  if (dtype == j.end() || !dtype->is_string() || dtype->get<std::string>() != kHsdDtype)
    throw Error(Errc::MalformedHeader, "'dtype' must be \"f32le\"");

  auto conds = j.find("conditions");
  if (conds == j.end() || !conds->is_array() || conds->empty())
    throw Error(Errc::MalformedHeader, "'conditions' must be a non-empty array");
  for (const auto& c : *conds) {
    if (!c.is_number_integer()) throw Error(Errc::MalformedHeader, "condition codes must be integers");
    m.conditions_present.push_back(condition_from_code(c.get<int>()));
  }
  return m;
}

std::string metadata_json(const DumpMetadata& m) {
  json j;
  j["model_name"] = m.model_name;
  j["num_layers"] = m.num_layers;
  j["hidden_dim"] = m.hidden_dim;
  j["num_samples"] = m.num_samples;
  json conds = json::array();
  for (auto c : m.conditions_present) conds.push_back(static_cast<int>(c));
  j["conditions"] = std::move(conds);
  j["dtype"] = kHsdDtype;
  return j.dump();
}

// Returns the metadata and the byte offset where the payload begins.
std::pair<DumpMetadata, std::size_t> parse_header(std::span<const std::byte> bytes) {
  if (bytes.empty()) throw Error(Errc::BadMagic, "empty input");
  const std::size_t magic_len = kHsdMagic.size();
  const std::size_t avail = std::min(bytes.size(), magic_len);
  if (std::memcmp(bytes.data(), kHsdMagic.data(), avail) != 0) throw Error(Errc::BadMagic, "not an HSD file");
  if (bytes.size() < kFixedHeaderBytes) throw Error(Errc::TruncatedPayload, "file ends inside the fixed header");

  const auto version = get_u32(bytes.subspan(8, 4));
  if (version != kHsdVersion)
    throw Error(Errc::UnsupportedVersion, "format version " + std::to_string(version) + " (expected 1)");

  const std::size_t json_len = get_u32(bytes.subspan(12, 4));
  if (bytes.size() - kFixedHeaderBytes < json_len)
    throw Error(Errc::TruncatedPayload, "file ends inside the metadata block");

  std::string_view text(reinterpret_cast<const char*>(bytes.data() + kFixedHeaderBytes), json_len);
  auto meta = parse_metadata(version, text);

  std::vector<ConditionLabel> sorted = meta.conditions_present;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error(Errc::InvariantViolation, "duplicate condition codes");
  return {std::move(meta), kFixedHeaderBytes + json_len};
}

std::vector<std::byte> slurp(std::istream& in) {
  std::vector<std::byte> out;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const auto got = static_cast<std::size_t>(in.gcount());
    const auto* p = reinterpret_cast<const std::byte*>(buf);
    out.insert(out.end(), p, p + got);
  }
  return out;
}

}  // namespace

std::string_view condition_name(ConditionLabel label) noexcept {
  switch (label) {
    case ConditionLabel::GT: return "GT";
    case ConditionLabel::HALL: return "HALL";
    case ConditionLabel::NOIMG_GT: return "NOIMG_GT";
    case ConditionLabel::NOIMG_HALL: return "NOIMG_HALL";
    case ConditionLabel::NOIMG_UNK: return "NOIMG_UNK";
  }
  return "?";
}

ConditionLabel condition_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kNumConditionLabels))
    throw Error(Errc::MalformedHeader, "condition code " + std::to_string(code) + " outside 0-4");
  return static_cast<ConditionLabel>(code);
}

std::optional<std::size_t> DumpMetadata::condition_index(ConditionLabel label) const noexcept {
  auto it = std::find(conditions_present.begin(), conditions_present.end(), label);
  if (it == conditions_present.end()) return std::nullopt;
  return static_cast<std::size_t>(it - conditions_present.begin());
}

HiddenStateDump HiddenStateDump::zeros(DumpMetadata metadata) {
  HiddenStateDump d;
  d.states.assign(metadata.element_count(), 0.0f);
  d.metadata = std::move(metadata);
  return d;
}

void HiddenStateDump::validate() const {
  const auto& m = metadata;
  if (m.num_layers < 1 || m.hidden_dim < 1 || m.num_samples < 1)
    throw Error(Errc::InvariantViolation, "num_layers, hidden_dim and num_samples must be >= 1");
  if (m.conditions_present.empty()) throw Error(Errc::InvariantViolation, "no conditions present");
  std::array<bool, kNumConditionLabels> seen{};
  for (auto c : m.conditions_present) {
    const auto code = static_cast<std::size_t>(c);
    if (code >= kNumConditionLabels) throw Error(Errc::InvariantViolation, "condition code outside 0-4");
    if (seen[code]) throw Error(Errc::InvariantViolation, "duplicate condition " + std::string(condition_name(c)));
    seen[code] = true;
  }
  std::size_t expected = checked_mul(checked_mul(checked_mul(m.num_samples, m.num_conditions()), m.num_layers),
                                     m.hidden_dim);
  if (states.size() != expected)
    throw Error(Errc::InvariantViolation, "state count " + std::to_string(states.size()) + " != N*C*L*d = " +
                                              std::to_string(expected));
  auto bad = std::find_if(states.begin(), states.end(), [](float v) { return !std::isfinite(v); });
  if (bad != states.end())
    throw Error(Errc::InvariantViolation,
                "non-finite value at element " + std::to_string(bad - states.begin()));
}

std::vector<std::byte> serialize_dump(const HiddenStateDump& dump) {
  dump.validate();
  const std::string meta = metadata_json(dump.metadata);

  std::vector<std::byte> out;
  out.reserve(kFixedHeaderBytes + meta.size() + dump.states.size() * 4);
  for (char c : kHsdMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kHsdVersion);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (char c : meta) out.push_back(static_cast<std::byte>(c));
  for (float v : dump.states) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

void write_dump(const HiddenStateDump& dump, std::ostream& sink) {
  const auto bytes = serialize_dump(dump);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  sink.flush();
  if (!sink) throw Error(Errc::SinkFailure, "write failed");
}

HiddenStateDump parse_dump(std::span<const std::byte> bytes) {
  auto [meta, payload_begin] = parse_header(bytes);

  const std::size_t count = checked_mul(
      checked_mul(checked_mul(meta.num_samples, meta.num_conditions()), meta.num_layers), meta.hidden_dim);
  const std::size_t expected_bytes = checked_mul(count, 4);
  const std::size_t payload_bytes = bytes.size() - payload_begin;
  if (payload_bytes < expected_bytes)
    throw Error(Errc::TruncatedPayload, "payload has " + std::to_string(payload_bytes) + " bytes, header implies " +
                                            std::to_string(expected_bytes));
  if (payload_bytes > expected_bytes)
    throw Error(Errc::ShapeMismatch, "payload has " + std::to_string(payload_bytes - expected_bytes) +
                                         " bytes beyond N*C*L*d*4 = " + std::to_string(expected_bytes));

  HiddenStateDump dump;
  dump.metadata = std::move(meta);
  dump.states.resize(count);
  auto payload = bytes.subspan(payload_begin);
  for (std::size_t i = 0; i < count; ++i) dump.states[i] = std::bit_cast<float>(get_u32(payload.subspan(4 * i, 4)));
  dump.validate();
  return dump;
}

HiddenStateDump read_dump(std::istream& source) {
  const auto bytes = slurp(source);
  return parse_dump(bytes);
}

DumpMetadata read_dump_header(std::istream& source) {
  std::vector<std::byte> head(kFixedHeaderBytes);
  source.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(source.gcount()));
  if (head.size() == kFixedHeaderBytes) {
    const std::size_t json_len = get_u32(std::span<const std::byte>(head).subspan(12, 4));
    // Chunked so a corrupt length cannot force a huge allocation up front.
    char buf[1 << 16];
    std::size_t left = json_len;
    while (left > 0 && source) {
      source.read(buf, static_cast<std::streamsize>(std::min(left, sizeof buf)));
      const auto got = static_cast<std::size_t>(source.gcount());
      const auto* p = reinterpret_cast<const std::byte*>(buf);
      head.insert(head.end(), p, p + got);
      left -= got;
    }
  }
  return parse_header(head).first;
}

void save_dump(const HiddenStateDump& dump, const std::filesystem::path& path) {
  const auto bytes = serialize_dump(dump);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::SinkFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::SinkFailure, "write to " + path.string() + " failed");
}

HiddenStateDump load_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return read_dump(in);
}

}  // namespace revis
