#include "revis/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "revis/error.hpp"
#include "revis/kernels.hpp"
#include "revis/rng.hpp"
#include "revis/tensorio.hpp"

namespace revis {

namespace {

using json = nlohmann::json;

constexpr std::string_view kWeightsModelPrefix = "revis-toymodel ";
constexpr double kNormEps = 1e-6;

void rms_norm(std::span<const double> x, std::span<const float> gain, std::span<double> out) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * static_cast<double>(gain[i]);
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

void add_position(std::span<double> x, std::size_t pos) {
  const auto d = static_cast<double>(x.size());
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
    x[i] += std::sin(static_cast<double>(pos) * freq);
    x[i + 1] += std::cos(static_cast<double>(pos) * freq);
  }
}

}  // namespace

struct ToyModel::Layout {
  std::size_t d, ff, vocab, layers, per_layer;

  explicit Layout(const ToyModelSpec& s)
      : d(s.hidden_dim), ff(4 * s.hidden_dim), vocab(s.vocab_size), layers(s.num_layers) {
    per_layer = d + 4 * d * d + d + ff * d + ff + d * ff + d;
  }
  std::size_t embed() const { return 0; }
  std::size_t layer(std::size_t l) const { return vocab * d + l * per_layer; }
  std::size_t attn_norm(std::size_t l) const { return layer(l); }
  std::size_t wq(std::size_t l) const { return attn_norm(l) + d; }
  std::size_t wk(std::size_t l) const { return wq(l) + d * d; }
  std::size_t wv(std::size_t l) const { return wk(l) + d * d; }
  std::size_t wo(std::size_t l) const { return wv(l) + d * d; }
  std::size_t mlp_norm(std::size_t l) const { return wo(l) + d * d; }
  std::size_t w1(std::size_t l) const { return mlp_norm(l) + d; }
  std::size_t b1(std::size_t l) const { return w1(l) + ff * d; }
  std::size_t w2(std::size_t l) const { return b1(l) + ff; }
  std::size_t b2(std::size_t l) const { return w2(l) + d * ff; }
  std::size_t final_norm() const { return layer(layers); }
  std::size_t head() const { return final_norm() + d; }
  std::size_t total() const { return head() + vocab * d; }
};

void ToyModelSpec::validate() const {
  if (vocab_size < 4) throw Error(Errc::InvalidSpec, "vocab_size must be >= 4 (PAD, BOS, EOS, IMG reserved)");
  if (hidden_dim < 1 || num_layers < 1 || num_heads < 1 || max_seq < 1)
    throw Error(Errc::InvalidSpec, "dimensions must be positive");
  if (hidden_dim % num_heads != 0) throw Error(Errc::InvalidSpec, "hidden_dim must be divisible by num_heads");
}

ToyModelSpec toy_spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidSpec, "model spec must be a JSON object");
  ToyModelSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "vocab_size") s.vocab_size = value.get<std::size_t>();
      else if (key == "hidden_dim") s.hidden_dim = value.get<std::size_t>();
      else if (key == "num_layers") s.num_layers = value.get<std::size_t>();
      else if (key == "num_heads") s.num_heads = value.get<std::size_t>();
      else if (key == "max_seq") s.max_seq = value.get<std::size_t>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw Error(Errc::InvalidSpec, "unknown model spec key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
  s.validate();
  return s;
}

json toy_spec_to_json(const ToyModelSpec& s) {
  return {{"vocab_size", s.vocab_size}, {"hidden_dim", s.hidden_dim}, {"num_layers", s.num_layers},
          {"num_heads", s.num_heads},   {"max_seq", s.max_seq},       {"seed", s.seed}};
}

ToyModel::ToyModel(const ToyModelSpec& spec) : spec_(spec) {}

ToyModel ToyModel::build(const ToyModelSpec& spec) {
  spec.validate();
  ToyModel model(spec);
  const Layout lay(spec);
  model.weights_.assign(lay.total(), 0.0f);
  auto& w = model.weights_;
  SplitMix64 rng(spec.seed);

  const auto fill_normal = [&](std::size_t offset, std::size_t count, double stddev) {
    for (std::size_t i = 0; i < count; ++i) w[offset + i] = static_cast<float>(stddev * rng.normal());
  };
  const auto fill_const = [&](std::size_t offset, std::size_t count, float v) {
    std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(offset), count, v);
  };

  const std::size_t d = lay.d;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  fill_normal(lay.embed(), lay.vocab * d, 1.0);
  for (std::size_t l = 0; l < lay.layers; ++l) {
    fill_const(lay.attn_norm(l), d, 1.0f);
    fill_normal(lay.wq(l), d * d, inv_sqrt_d);
    fill_normal(lay.wk(l), d * d, inv_sqrt_d);
    fill_normal(lay.wv(l), d * d, inv_sqrt_d);
    fill_normal(lay.wo(l), d * d, inv_sqrt_d);
    fill_const(lay.mlp_norm(l), d, 1.0f);
    fill_normal(lay.w1(l), lay.ff * d, inv_sqrt_d);
    fill_normal(lay.w2(l), d * lay.ff, 1.0 / std::sqrt(static_cast<double>(lay.ff)));
  }
  fill_const(lay.final_norm(), d, 1.0f);
  fill_normal(lay.head(), lay.vocab * d, inv_sqrt_d);
  return model;
}

ToyModel build_model(const ToyModelSpec& spec) { return ToyModel::build(spec); }

void ToyModel::save_weights(const std::filesystem::path& path) const {
  // One HSD row per hidden_dim-sized chunk; every parameter block is a
  // multiple of hidden_dim long.
  DumpMetadata meta;
  meta.model_name = std::string(kWeightsModelPrefix) + toy_spec_to_json(spec_).dump();
  meta.num_layers = 1;
  meta.hidden_dim = spec_.hidden_dim;
  meta.num_samples = weights_.size() / spec_.hidden_dim;
  meta.conditions_present = {ConditionLabel::GT};
  HiddenStateDump dump{std::move(meta), weights_};
  save_dump(dump, path);
}

ToyModel ToyModel::load_weights(const std::filesystem::path& path) {
  auto dump = load_dump(path);
  const auto& name = dump.metadata.model_name;
  if (name.rfind(kWeightsModelPrefix, 0) != 0) throw Error(Errc::InvalidSpec, path.string() + " holds no toy weights");
  json spec_json;
  try {
    spec_json = json::parse(name.substr(kWeightsModelPrefix.size()));
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("weights spec: ") + e.what());
  }
  ToyModel model(toy_spec_from_json(spec_json));
  if (dump.states.size() != Layout(model.spec_).total())
    throw Error(Errc::ShapeMismatch, "weight count does not match the embedded spec");
  model.weights_ = std::move(dump.states);
  return model;
}

ToyModel::Session::Session(const ToyModel& model) : model_(&model) {
  const auto& s = model.spec_;
  keys_.assign(s.num_layers, Matrix(s.max_seq, s.hidden_dim));
  values_.assign(s.num_layers, Matrix(s.max_seq, s.hidden_dim));
  last_states_.assign(s.num_layers, Vector(s.hidden_dim, 0.0));
}

Vector ToyModel::Session::push(Token token, const LayerHook& hook) {
  const auto& s = model_->spec_;
  if (length_ >= s.max_seq)
    throw Error(Errc::SequenceTooLong, "sequence exceeds max_seq " + std::to_string(s.max_seq));
  if (token >= s.vocab_size) throw Error(Errc::InvalidSpec, "token id " + std::to_string(token) + " >= vocab_size");

  const Layout lay(s);
  const std::size_t d = lay.d;
  const std::size_t heads = s.num_heads;
  const std::size_t dh = d / heads;
  const std::size_t pos = length_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Vector x(d), xn(d), q(d), attn(d), proj(d), hidden(lay.ff), mlp(d);
  const auto emb = model_->slice(lay.embed() + static_cast<std::size_t>(token) * d, d);
  for (std::size_t i = 0; i < d; ++i) x[i] = emb[i];
  add_position(x, pos);

  std::vector<double> scores(pos + 1);
  for (std::size_t l = 0; l < lay.layers; ++l) {
    rms_norm(x, model_->slice(lay.attn_norm(l), d), xn);
    kernels::omp::matvec(model_->slice(lay.wq(l), d * d), d, d, xn, q);
    kernels::omp::matvec(model_->slice(lay.wk(l), d * d), d, d, xn, keys_[l].row(pos));
    kernels::omp::matvec(model_->slice(lay.wv(l), d * d), d, d, xn, values_[l].row(pos));

    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      double max_score = -INFINITY;
      for (std::size_t j = 0; j <= pos; ++j) {
        const auto k = keys_[l].row(j);
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += q[off + c] * k[off + c];
        scores[j] = acc * scale;
        max_score = std::max(max_score, scores[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j <= pos; ++j) {
        scores[j] = std::exp(scores[j] - max_score);
        denom += scores[j];
      }
      for (std::size_t c = 0; c < dh; ++c) attn[off + c] = 0.0;
      for (std::size_t j = 0; j <= pos; ++j) {
        const auto v = values_[l].row(j);
        const double p = scores[j] / denom;
        for (std::size_t c = 0; c < dh; ++c) attn[off + c] += p * v[off + c];
      }
    }
    kernels::omp::matvec(model_->slice(lay.wo(l), d * d), d, d, attn, proj);
    for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];

    rms_norm(x, model_->slice(lay.mlp_norm(l), d), xn);
    kernels::omp::matvec(model_->slice(lay.w1(l), lay.ff * d), lay.ff, d, xn, hidden);
    const auto b1 = model_->slice(lay.b1(l), lay.ff);
    for (std::size_t i = 0; i < lay.ff; ++i) hidden[i] = gelu(hidden[i] + b1[i]);
    kernels::omp::matvec(model_->slice(lay.w2(l), d * lay.ff), d, lay.ff, hidden, mlp);
    const auto b2 = model_->slice(lay.b2(l), d);
    for (std::size_t i = 0; i < d; ++i) x[i] += mlp[i] + b2[i];

    if (hook) hook(l, x);
    last_states_[l] = x;
  }

  rms_norm(x, model_->slice(lay.final_norm(), d), xn);
  Vector logits(lay.vocab);
  kernels::omp::matvec(model_->slice(lay.head(), lay.vocab * d), lay.vocab, d, xn, logits);
  ++length_;
  return logits;
}

ForwardResult forward_with_hooks(const ToyModel& model, std::span<const Token> tokens, const LayerHook& hook) {
  if (tokens.empty()) throw Error(Errc::InvalidConfig, "empty token sequence");
  if (tokens.size() > model.spec().max_seq)
    throw Error(Errc::SequenceTooLong, std::to_string(tokens.size()) + " tokens > max_seq " +
                                           std::to_string(model.spec().max_seq));
  ToyModel::Session session(model);
  ForwardResult result;
  result.logits = Matrix(tokens.size(), model.spec().vocab_size);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool last = i + 1 == tokens.size();
    const auto logits = session.push(tokens[i], last ? hook : LayerHook{});
    std::copy(logits.begin(), logits.end(), result.logits.row(i).begin());
  }
  result.layer_states = session.last_layer_states();
  return result;
}

Token argmax_token(std::span<const double> logits) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<Token>(best);
}

namespace {

Token sample_token(std::span<const double> logits, double temperature, SplitMix64& rng) {
  const double t = temperature > 0.0 ? temperature : 1.0;
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp((logits[i] - mx) / t));
  double u = rng.uniform() * z;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (u < p[i]) return static_cast<Token>(i);
    u -= p[i];
  }
  return static_cast<Token>(p.size() - 1);
}

}  // namespace

GenerationResult generate(const ToyModel& model, std::span<const Token> prompt, const SteeringConfig& config,
                          const SteeringVectorSet* vectors, std::size_t max_new, const GenerateOptions& options) {
  const auto& spec = model.spec();
  if (prompt.empty()) throw Error(Errc::InvalidConfig, "prompt must not be empty");
  if (prompt.size() > spec.max_seq)
    throw Error(Errc::SequenceTooLong, "prompt longer than max_seq " + std::to_string(spec.max_seq));
  config.validate();
  if (config.mode != SteeringMode::Off) {
    if (!vectors) throw Error(Errc::InvalidConfig, "steering needs a vector set");
    if (vectors->hidden_dim != spec.hidden_dim || vectors->num_layers() != spec.num_layers)
      throw Error(Errc::DimensionMismatch, "vector set shape does not match the model");
  }
  if (options.drift) {
    if (options.drift->direction.size() != spec.hidden_dim || options.drift->layer >= spec.num_layers)
      throw Error(Errc::DimensionMismatch, "drift direction or layer does not match the model");
  }

  std::optional<SplitMix64> rng;
  if (options.sampling) rng.emplace(options.sampling->seed);

  ToyModel::Session session(model);
  for (std::size_t i = 0; i + 1 < prompt.size(); ++i) session.push(prompt[i]);

  GenerationResult result;
  Token next = prompt.back();
  for (std::size_t t = 0; t < max_new && session.length() < spec.max_seq; ++t) {
    StepSteerer steerer(vectors, config, spec.num_layers, t);
    const LayerHook hook = [&](std::size_t layer, std::span<double> state) {
      if (options.drift && options.drift->layer == layer)
        inject_inplace(state, options.drift->direction, static_cast<double>(t + 1) * options.drift->rate);
      steerer.apply(layer, state);
    };
    const auto logits = session.push(next, hook);
    result.traces.push_back(steerer.trace());
    next = rng ? sample_token(logits, options.sampling->temperature, *rng) : argmax_token(logits);
    result.tokens.push_back(next);
    if (next == kEosToken) break;
  }
  return result;
}

}  // namespace revis
