#include "revis/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "revis/calibration.hpp"
#include "revis/kernels.hpp"
#include "revis/metrics.hpp"
#include "revis/steering.hpp"
#include "revis/synthetic.hpp"
#include "revis/tensorio.hpp"
#include "revis/toymodel.hpp"
#include "revis/vectors.hpp"

namespace revis::cli {

namespace {

using json = nlohmann::json;

struct GlobalOptions {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string log_level = "warn";
  bool json_output = false;
  std::string out;  // output path for synth, extract, calibrate and metrics
};

const std::string& require_out(const GlobalOptions& g, const char* what) {
  if (g.out.empty()) throw Error(Errc::InvalidConfig, std::string("--out is required for ") + what);
  return g.out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
}

std::vector<Token> parse_tokens(const std::string& text) {
  std::vector<Token> tokens;
  std::string item;
  std::istringstream in(text);
  while (in >> std::ws && std::getline(in, item, ',')) {
    std::istringstream words(item);
    std::string word;
    while (words >> word) {
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(word, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != word.size() || word[0] == '-') throw Error(Errc::ParseError, "bad token id '" + word + "'");
      tokens.push_back(static_cast<Token>(v));
    }
  }
  if (tokens.empty()) throw Error(Errc::ParseError, "prompt has no tokens");
  return tokens;
}

std::string flags_text(const DegenerateFlags& f) {
  if (f.zero_prior) return "zero-prior";
  if (f.parallel) return "parallel";
  return "-";
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

std::string fmt_double(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : std::string("n/a"); }

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::optional<std::size_t> samples, layers, dim;
  std::optional<double> entanglement, noise, scale;
};

int cmd_synth(const SynthArgs& a, const GlobalOptions& g) {
  const auto& out = require_out(g, "synth");
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  if (a.samples) cfg["num_samples"] = *a.samples;
  if (a.layers) cfg["num_layers"] = *a.layers;
  if (a.dim) cfg["hidden_dim"] = *a.dim;
  if (a.entanglement) cfg["entanglement"] = *a.entanglement;
  if (a.noise) cfg["noise_scale"] = *a.noise;
  if (a.scale) cfg["scale"] = *a.scale;
  if (g.seed_given || !cfg.contains("seed")) cfg["seed"] = g.seed;

  const auto wc = world_config_from_json(cfg, g.seed);
  const auto dump = synthesize_counterfactual_dump(wc.world, wc.num_layers, wc.hidden_dim);
  save_dump(dump, out);
  const auto band = separable_band(wc.world, wc.num_layers);
  spdlog::info("wrote {} ({} samples x 5 conditions x {} layers x {} dims)", out, wc.world.num_samples,
               wc.num_layers, wc.hidden_dim);
  if (g.json_output) {
    print_json({{"out", out},
                {"num_samples", wc.world.num_samples},
                {"num_layers", wc.num_layers},
                {"hidden_dim", wc.hidden_dim},
                {"entanglement", wc.world.entanglement},
                {"noise_scale", wc.world.noise_scale},
                {"seed", wc.world.seed},
                {"separable_band", {band.first, band.end}}});
  } else {
    fmt::print("wrote {}: N={} L={} d={} entanglement={} noise={} seed={} separable band=[{}, {})\n", out,
               wc.world.num_samples, wc.num_layers, wc.hidden_dim, wc.world.entanglement, wc.world.noise_scale,
               wc.world.seed, band.first, band.end);
  }
  return kExitOk;
}

// --- extract ----------------------------------------------------------------

int cmd_extract(const std::string& dump_path, const GlobalOptions& g) {
  const auto& out = require_out(g, "extract");
  const auto dump = load_dump(dump_path);
  const auto set = build_vector_set(dump);
  save_vector_set(set, out, dump.metadata.model_name);
  spdlog::info("wrote {} and {}", out, vector_sidecar_path(out).string());

  if (g.json_output) {
    json layers = json::array();
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      const auto& lv = set.layers[l];
      layers.push_back({{"layer", l},
                        {"entanglement_cos", lv.entanglement_cos},
                        {"norm_raw", kernels::norm(lv.raw)},
                        {"norm_prior", kernels::norm(lv.prior)},
                        {"norm_perp", kernels::norm(lv.perp)},
                        {"zero_prior", lv.flags.zero_prior},
                        {"parallel", lv.flags.parallel}});
    }
    print_json({{"out", out}, {"layers", std::move(layers)}});
    return kExitOk;
  }
  fmt::print("{:>5}  {:>12}  {:>12}  {:>12}  {:>12}  {}\n", "layer", "cos(raw,pri)", "|v_raw|", "|v_prior|",
             "|v_perp|", "flags");
  for (std::size_t l = 0; l < set.num_layers(); ++l) {
    const auto& lv = set.layers[l];
    fmt::print("{:>5}  {:>12.6f}  {:>12.6f}  {:>12.6f}  {:>12.6f}  {}\n", l, lv.entanglement_cos,
               kernels::norm(lv.raw), kernels::norm(lv.prior), kernels::norm(lv.perp), flags_text(lv.flags));
  }
  return kExitOk;
}

// --- calibrate --------------------------------------------------------------

struct CalibrateArgs {
  std::string vectors, states, fact, hall;
  double k = kDefaultPercentile;
  std::string mode = "deepest";
};

int cmd_calibrate(const CalibrateArgs& a, const GlobalOptions& g) {
  const auto& out = require_out(g, "calibrate");
  if (!(a.k > 0.0 && a.k < 1.0)) throw Error(Errc::KOutOfRange, "--k must lie in (0, 1)");
  const auto mode = selection_mode_from_name(a.mode);
  const auto vectors = load_vector_set(a.vectors);
  CalibrationStates states;
  if (!a.states.empty()) {
    states = CalibrationStates::from_paired_dump(load_dump(a.states));
  } else {
    if (a.fact.empty() || a.hall.empty()) throw Error(Errc::InvalidConfig, "need --states or both --fact and --hall");
    states = CalibrationStates::from_dumps(load_dump(a.fact), load_dump(a.hall));
  }
  const auto profile = calibrate(states, vectors, a.k, mode);
  save_profile(profile, out);

  if (g.json_output) {
    json delta = json::array();
    for (double d : profile.delta) delta.push_back(std::isfinite(d) ? json(d) : json(nullptr));
    print_json({{"out", out},
                {"selected_layer", profile.selected_layer},
                {"tau", profile.tau},
                {"k", profile.k},
                {"selection_mode", selection_mode_name(profile.mode)},
                {"delta", std::move(delta)}});
    return kExitOk;
  }
  fmt::print("selected layer L* = {}  tau = {:.6f}  (k = {}, mode = {})\n", profile.selected_layer, profile.tau,
             profile.k, selection_mode_name(profile.mode));
  fmt::print("{:>5}  {:>12}\n", "layer", "delta");
  for (std::size_t l = 0; l < profile.delta.size(); ++l)
    fmt::print("{:>5}  {:>12}{}\n", l, fmt_double(profile.delta[l]), l == profile.selected_layer ? "  <- L*" : "");
  return kExitOk;
}

// --- steer ------------------------------------------------------------------

struct SteerArgs {
  std::string model, weights, vectors, profile, prompt, prompt_file, trace;
  double alpha = kDefaultAlpha;
  std::string mode = "sparse";
  std::optional<std::size_t> layer;
  std::optional<double> tau;
  std::size_t max_new = 32;
  double drift_rate = 0.0;
  std::size_t drift_layer = 0;
  std::optional<double> temperature;
};

int cmd_steer(const SteerArgs& a, const GlobalOptions& g) {
  ToyModelSpec spec;
  if (!a.weights.empty()) {
    spec = ToyModel::load_weights(a.weights).spec();
  } else if (!a.model.empty()) {
    const auto j = read_json_file(a.model);
    spec = toy_spec_from_json(j);
    if (g.seed_given || !j.contains("seed")) spec.seed = g.seed;
  } else {
    spec.seed = g.seed;
  }
  const auto model = a.weights.empty() ? build_model(spec) : ToyModel::load_weights(a.weights);

  std::string prompt_text = a.prompt;
  if (!a.prompt_file.empty()) {
    std::ifstream in(a.prompt_file);
    if (!in) throw Error(Errc::IoError, "cannot open " + a.prompt_file);
    prompt_text.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto prompt = parse_tokens(prompt_text);

  SteeringConfig config;
  config.alpha = a.alpha;
  config.mode = steering_mode_from_name(a.mode);
  config.layer = a.layer;
  config.tau = a.tau;

  std::optional<SteeringVectorSet> vectors;
  if (!a.vectors.empty()) vectors = load_vector_set(a.vectors);
  if (!a.profile.empty()) config = resolve(config, load_profile(a.profile));
  if (config.mode != SteeringMode::Off && !vectors) throw Error(Errc::InvalidConfig, "--vectors is required");

  GenerateOptions options;
  if (a.drift_rate != 0.0) {
    if (!vectors) throw Error(Errc::InvalidConfig, "--drift-rate needs --vectors");
    const auto& raw = vectors->at(config.layer.value_or(spec.num_layers - 1)).raw;
    const double n = kernels::norm(raw);
    if (n == 0.0) throw Error(Errc::DegenerateVector, "v_raw is zero; cannot derive a drift direction");
    Drift drift;
    drift.rate = a.drift_rate;
    drift.layer = a.drift_layer;
    for (double v : raw) drift.direction.push_back(-v / n);
    options.drift = std::move(drift);
  }
  if (a.temperature) options.sampling = Sampling{*a.temperature, g.seed};

  const auto start = std::chrono::steady_clock::now();
  const auto result = generate(model, prompt, config, vectors ? &*vectors : nullptr, a.max_new, options);
  const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  const double mean_ms = result.tokens.empty() ? 0.0 : elapsed / static_cast<double>(result.tokens.size());

  if (!a.trace.empty()) {
    std::ofstream out(a.trace);
    write_trace_jsonl(result.traces, out);
    if (!out) throw Error(Errc::SinkFailure, "cannot write " + a.trace);
  }
  std::size_t interventions = 0;
  for (const auto& tr : result.traces) interventions += tr.intervened ? 1 : 0;

  if (g.json_output) {
    json j = {{"tokens", result.tokens},
              {"steps", result.traces.size()},
              {"interventions", interventions},
              {"mode", steering_mode_name(config.mode)},
              {"alpha", config.alpha},
              {"mean_token_ms", mean_ms}};
    if (config.layer) j["layer"] = *config.layer;
    if (config.tau) j["tau"] = *config.tau;
    print_json(j);
    return kExitOk;
  }
  std::string joined;
  for (std::size_t i = 0; i < result.tokens.size(); ++i) joined += (i ? "," : "") + std::to_string(result.tokens[i]);
  fmt::print("{}\n", joined);
  fmt::print(stderr, "{} tokens, {} interventions, mean {:.4f} ms/token ({} mode, alpha {})\n", result.tokens.size(),
             interventions, mean_ms, steering_mode_name(config.mode), config.alpha);
  return kExitOk;
}

// --- metrics ----------------------------------------------------------------

int cmd_metrics(const std::string& input, const GlobalOptions& g) {
  std::ifstream in(input);
  if (!in) throw Error(Errc::IoError, "cannot open " + input);
  const auto data = parse_metrics_jsonl(in);
  if (data.captions.empty() && data.pope_records == 0) throw Error(Errc::ParseError, input + " has no records");

  json out = json::object();
  if (!data.captions.empty()) {
    const auto c = chair_scores(data.captions);
    out["chair"] = {{"captions", data.captions.size()},
                    {"chair_i", c.chair_i},
                    {"chair_s", c.chair_s},
                    {"chair_s_sentence", c.chair_s_sentence}};
  }
  if (data.pope_records > 0) {
    const auto p = pope_scores(data.pope);
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    out["pope"] = {{"tp", data.pope.tp},          {"fp", data.pope.fp},          {"tn", data.pope.tn},
                   {"fn", data.pope.fn},          {"accuracy", p.accuracy},      {"recall", opt(p.recall)},
                   {"precision", opt(p.precision)}, {"f1", opt(p.f1)}};
  }
  if (!g.out.empty()) {
    std::ofstream file(g.out);
    file << out.dump(2) << '\n';
    if (!file) throw Error(Errc::SinkFailure, "cannot write " + g.out);
  }
  if (g.json_output) {
    print_json(out);
    return kExitOk;
  }
  if (out.contains("chair")) {
    const auto& c = out["chair"];
    fmt::print("CHAIR  captions={}  CHAIR_I={:.4f}  CHAIR_S={:.4f}  CHAIR_S(per-sentence)={:.4f}\n",
               c["captions"].get<std::size_t>(), c["chair_i"].get<double>(), c["chair_s"].get<double>(),
               c["chair_s_sentence"].get<double>());
  }
  if (out.contains("pope")) {
    const auto& p = out["pope"];
    const auto show = [](const json& v) { return v.is_null() ? std::string("n/a") : fmt::format("{:.4f}", v.get<double>()); };
    fmt::print("POPE   n={}  accuracy={}  recall={}  precision={}  f1={}\n", data.pope.total(), show(p["accuracy"]),
               show(p["recall"]), show(p["precision"]), show(p["f1"]));
  }
  return kExitOk;
}

// --- inspect ----------------------------------------------------------------

int cmd_inspect(const std::string& path, const GlobalOptions& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  const auto m = read_dump_header(in);
  json conds = json::array();
  std::string names;
  for (auto c : m.conditions_present) {
    conds.push_back(static_cast<int>(c));
    names += (names.empty() ? "" : ",") + std::string(condition_name(c));
  }
  if (g.json_output) {
    print_json({{"format_version", m.format_version},
                {"model_name", m.model_name},
                {"num_samples", m.num_samples},
                {"conditions", conds},
                {"num_layers", m.num_layers},
                {"hidden_dim", m.hidden_dim},
                {"dtype", kHsdDtype},
                {"payload_bytes", m.element_count() * 4}});
    return kExitOk;
  }
  fmt::print("file           {}\n", path);
  fmt::print("format_version {}\n", m.format_version);
  fmt::print("model_name     {}\n", m.model_name);
  fmt::print("shape          N={} C={} L={} d={}\n", m.num_samples, m.num_conditions(), m.num_layers, m.hidden_dim);
  fmt::print("conditions     {}\n", names);
  fmt::print("dtype          {}\n", kHsdDtype);
  fmt::print("payload_bytes  {}\n", m.element_count() * 4);
  return kExitOk;
}

void setup_logging(const std::string& flag_level) {
  // Not registered, so run() can be called more than once per process.
  auto logger = std::make_shared<spdlog::logger>("revis", std::make_shared<spdlog::sinks::stderr_sink_st>());
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  std::string level = flag_level;
  if (const char* env = std::getenv("REVIS_LOG"); env && *env) level = env;
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::MissingCondition: return kExitMissingCondition;
    case Errc::NoSeparableLayer: return kExitNoSeparableLayer;
    case Errc::IoError:
    case Errc::SinkFailure: return kExitIo;
    default: return kExitInvalidInput;
  }
}

int run(int argc, char** argv) {
  CLI::App app{"REVIS latent-steering toolkit: synthetic dumps, vector extraction, calibration, steered decoding"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for every random stream (default 0)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off (REVIS_LOG overrides)")
      ->capture_default_str();
  app.add_flag("--json", g.json_output, "Emit structured JSON on stdout");
  app.add_option("--out", g.out, "Output path (synth: HSD, extract: vector payload, calibrate: profile JSON, "
                                 "metrics: optional JSON report)");

  int status = kExitOk;

  SynthArgs synth;
  auto* sc = app.add_subcommand("synth", "Generate a synthetic counterfactual hidden-state dump");
  sc->add_option("--config", synth.config, "World config JSON");
  sc->add_option("--samples", synth.samples, "Number of paired samples");
  sc->add_option("--layers", synth.layers, "Number of layers");
  sc->add_option("--dim", synth.dim, "Hidden dimension");
  sc->add_option("--entanglement", synth.entanglement, "Cosine between planted visual and prior directions");
  sc->add_option("--noise", synth.noise, "Per-element Gaussian noise scale");
  sc->add_option("--scale", synth.scale, "Express the world in other units (multiplies gains, base and noise)");
  sc->callback([&] { status = cmd_synth(synth, g); });

  std::string dump_path;
  auto* ec = app.add_subcommand("extract", "Build raw, prior and orthogonalized steering vectors from a dump");
  ec->add_option("--dump", dump_path, "Input HSD with GT, NOIMG_GT, NOIMG_HALL, NOIMG_UNK")->required();
  ec->callback([&] { status = cmd_extract(dump_path, g); });

  CalibrateArgs cal;
  auto* cc = app.add_subcommand("calibrate", "Select the steering layer and risk threshold");
  cc->add_option("--vectors", cal.vectors, "Vector payload from extract")->required();
  cc->add_option("--states", cal.states, "Paired HSD: GT rows are factual, HALL rows hallucinated");
  cc->add_option("--fact", cal.fact, "HSD of factual-response states");
  cc->add_option("--hall", cal.hall, "HSD of hallucinated-response states");
  cc->add_option("--k", cal.k, "Percentile for tau")->capture_default_str();
  cc->add_option("--mode", cal.mode, "deepest|argmax")->capture_default_str();
  cc->callback([&] { status = cmd_calibrate(cal, g); });

  SteerArgs st;
  auto* stc = app.add_subcommand("steer", "Greedy-decode the toy model with steering");
  stc->add_option("--model", st.model, "Toy model spec JSON (defaults otherwise)");
  stc->add_option("--weights", st.weights, "Toy model weights HSD (overrides --model)");
  stc->add_option("--vectors", st.vectors, "Vector payload from extract");
  stc->add_option("--profile", st.profile, "Calibration profile JSON");
  stc->add_option("--prompt", st.prompt, "Comma-separated token ids");
  stc->add_option("--prompt-file", st.prompt_file, "File with comma-separated token ids");
  stc->add_option("--alpha", st.alpha, "Steering intensity")->capture_default_str();
  stc->add_option("--mode", st.mode, "sparse|dense|off")->capture_default_str();
  stc->add_option("--layer", st.layer, "Override the calibrated layer");
  stc->add_option("--tau", st.tau, "Override the calibrated threshold");
  stc->add_option("--max-new", st.max_new, "Maximum generated tokens")->capture_default_str();
  stc->add_option("--trace", st.trace, "Write the per-step trace as JSON lines");
  stc->add_option("--drift-rate", st.drift_rate, "Plant a drift along -v_raw growing by this much per step");
  stc->add_option("--drift-layer", st.drift_layer, "Layer receiving the planted drift")->capture_default_str();
  stc->add_option("--temperature", st.temperature, "Sample from softmax at this temperature instead of greedy");
  stc->callback([&] {
    if (st.prompt.empty() && st.prompt_file.empty()) throw Error(Errc::InvalidConfig, "need --prompt or --prompt-file");
    status = cmd_steer(st, g);
  });

  std::string metrics_input;
  auto* mc = app.add_subcommand("metrics", "CHAIR and POPE scores from JSON lines");
  mc->add_option("--input,input", metrics_input, "JSON-lines file")->required();
  mc->callback([&] { status = cmd_metrics(metrics_input, g); });

  std::string inspect_path;
  auto* ic = app.add_subcommand("inspect", "Print an HSD header");
  ic->add_option("path", inspect_path, "HSD file")->required();
  ic->callback([&] { status = cmd_inspect(inspect_path, g); });

  app.parse_complete_callback([&] {
    g.seed_given = seed_opt->count() > 0;
    setup_logging(g.log_level);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return status;
}

}  // namespace revis::cli
