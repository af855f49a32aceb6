#include "revis/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <string>

#include <nlohmann/json.hpp>

#include "revis/error.hpp"

namespace revis {

namespace {

using json = nlohmann::json;

bool yes_no(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    auto s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "yes") return true;
    if (s == "no") return false;
  }
  throw Error(Errc::ParseError, "expected a boolean or \"yes\"/\"no\"");
}

}  // namespace

void CaptionObjects::validate() const {
  if (!std::includes(mentioned.begin(), mentioned.end(), hallucinated.begin(), hallucinated.end()))
    throw Error(Errc::InvariantViolation, "hallucinated objects must be a subset of mentioned objects");
  if (sentences_total < 1) throw Error(Errc::InvariantViolation, "sentences_total must be >= 1");
  if (sentences_hallucinated > sentences_total)
    throw Error(Errc::InvariantViolation, "sentences_hallucinated exceeds sentences_total");
}

ChairScores chair_scores(std::span<const CaptionObjects> batch) {
  if (batch.empty()) throw Error(Errc::EmptyBatch, "no captions");
  std::size_t mentioned = 0, hallucinated = 0, flagged = 0, sentences = 0, bad_sentences = 0;
  for (const auto& c : batch) {
    c.validate();
    mentioned += c.mentioned.size();
    hallucinated += c.hallucinated.size();
    flagged += c.hallucinated.empty() ? 0 : 1;
    sentences += c.sentences_total;
    bad_sentences += c.sentences_hallucinated;
  }
  if (mentioned == 0) throw Error(Errc::ZeroDenominator, "no objects mentioned in the batch");
  if (sentences == 0) throw Error(Errc::ZeroDenominator, "no sentences in the batch");
  ChairScores s;
  s.chair_i = static_cast<double>(hallucinated) / static_cast<double>(mentioned);
  s.chair_s = static_cast<double>(flagged) / static_cast<double>(batch.size());
  s.chair_s_sentence = static_cast<double>(bad_sentences) / static_cast<double>(sentences);
  return s;
}

PopeScores pope_scores(const BinaryOutcomes& o) {
  const auto total = o.total();
  if (total == 0) throw Error(Errc::ZeroDenominator, "no POPE outcomes");
  const auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  PopeScores s;
  s.accuracy = static_cast<double>(o.tp + o.tn) / static_cast<double>(total);
  s.recall = ratio(o.tp, o.tp + o.fn);
  s.precision = ratio(o.tp, o.tp + o.fp);
  s.f1 = ratio(2 * o.tp, 2 * o.tp + o.fp + o.fn);
  return s;
}

double require_metric(const std::optional<double>& value, const char* name) {
  if (!value) throw Error(Errc::ZeroDenominator, std::string(name) + " is undefined for these outcomes");
  return *value;
}

MetricsInput parse_metrics_jsonl(std::istream& in) {
  MetricsInput out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    try {
      const auto j = json::parse(line);
      if (!j.is_object()) throw Error(Errc::ParseError, "expected a JSON object");
      if (j.contains("mentioned")) {
        CaptionObjects c;
        for (const auto& m : j.at("mentioned")) c.mentioned.insert(m.get<std::string>());
        for (const auto& h : j.value("hallucinated", json::array())) c.hallucinated.insert(h.get<std::string>());
        c.sentences_total = j.value("sentences_total", std::size_t{1});
        c.sentences_hallucinated =
            j.value("sentences_hallucinated", std::size_t{c.hallucinated.empty() ? 0u : 1u});
        c.validate();
        out.captions.push_back(std::move(c));
      } else if (j.contains("label")) {
        const bool truth = yes_no(j.at("label"));
        const bool pred = yes_no(j.at("prediction"));
        (truth ? (pred ? out.pope.tp : out.pope.fn) : (pred ? out.pope.fp : out.pope.tn)) += 1;
        ++out.pope_records;
      } else if (j.contains("tp")) {
        out.pope.tp += j.at("tp").get<std::uint64_t>();
        out.pope.fp += j.at("fp").get<std::uint64_t>();
        out.pope.tn += j.at("tn").get<std::uint64_t>();
        out.pope.fn += j.at("fn").get<std::uint64_t>();
        ++out.pope_records;
      } else {
        throw Error(Errc::ParseError, "record is neither a caption nor a POPE outcome");
      }
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, where + e.what());
    } catch (const Error& e) {
      throw Error(Errc::ParseError, where + e.what());
    }
  }
  return out;
}

}  // namespace revis
