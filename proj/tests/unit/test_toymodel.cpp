#include <cmath>
#include <filesystem>
#include <optional>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "revis/kernels.hpp"
#include "revis/toymodel.hpp"
#include "support.hpp"

namespace revis {
namespace {

using testing::throws_errc;

ToyModelSpec small_spec(std::uint64_t seed = 0) {
  ToyModelSpec s;
  s.vocab_size = 24;
  s.hidden_dim = 16;
  s.num_layers = 4;
  s.num_heads = 2;
  s.max_seq = 24;
  s.seed = seed;
  return s;
}

SteeringVectorSet random_vectors(SplitMix64& rng, const ToyModelSpec& s) {
  SteeringVectorSet set;
  set.hidden_dim = s.hidden_dim;
  set.layers.resize(s.num_layers);
  for (auto& lv : set.layers)
    for (auto* v : {&lv.raw, &lv.prior, &lv.perp}) {
      v->resize(s.hidden_dim);
      for (auto& x : *v) x = rng.normal();
    }
  return set;
}

TEST(ToySpec, ValidationAndJson) {
  auto s = small_spec();
  EXPECT_NO_THROW(s.validate());
  s.num_heads = 3;
  EXPECT_TRUE(throws_errc([&] { s.validate(); }, Errc::InvalidSpec));
  const auto round = toy_spec_from_json(toy_spec_to_json(small_spec(9)));
  EXPECT_EQ(round, small_spec(9));
  EXPECT_EQ(toy_spec_from_json(nlohmann::json::object()), ToyModelSpec{});
  EXPECT_TRUE(throws_errc([] { toy_spec_from_json({{"hidden", 3}}); }, Errc::InvalidSpec));
}

TEST(ToyModel, DeterministicPerSeed) {
  const auto a = build_model(small_spec(1));
  const auto b = build_model(small_spec(1));
  const auto c = build_model(small_spec(2));
  EXPECT_TRUE(std::equal(a.weights().begin(), a.weights().end(), b.weights().begin(), b.weights().end()));
  EXPECT_FALSE(std::equal(a.weights().begin(), a.weights().end(), c.weights().begin(), c.weights().end()));
}

TEST(ToyModel, CausalPrefixLogitsUnchanged) {
  const auto m = build_model(small_spec());
  const std::vector<Token> tokens{1, 5, 9, 4, 17, 3};
  const auto full = forward_with_hooks(m, tokens);
  for (std::size_t n = 1; n < tokens.size(); ++n) {
    const auto prefix = forward_with_hooks(m, std::span(tokens).first(n));
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(prefix.logits.row(i)[0], full.logits.row(i)[0]);
  }
  EXPECT_EQ(full.logits.rows, tokens.size());
  EXPECT_EQ(full.layer_states.size(), 4u);
  for (double v : full.logits.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(ToyModel, PositionMatters) {
  const auto m = build_model(small_spec());
  const std::vector<Token> a{1, 7, 7};
  const auto r = forward_with_hooks(m, a);
  EXPECT_NE(r.logits.row(1)[0], r.logits.row(2)[0]);
}

TEST(ToyModel, HookSeesEveryLayerInOrderAndPropagates) {
  const auto m = build_model(small_spec());
  const std::vector<Token> tokens{1, 6, 8};
  std::vector<std::size_t> seen;
  const auto plain = forward_with_hooks(m, tokens, [&](std::size_t l, std::span<double>) { seen.push_back(l); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3}));

  const auto pushed = forward_with_hooks(m, tokens, [](std::size_t l, std::span<double> h) {
    if (l == 1) h[0] += 5.0;
  });
  EXPECT_EQ(pushed.layer_states[0], plain.layer_states[0]);
  EXPECT_NE(pushed.layer_states[1], plain.layer_states[1]);
  EXPECT_NE(pushed.layer_states[3], plain.layer_states[3]);
  EXPECT_NE(pushed.logits.row(2)[0], plain.logits.row(2)[0]);
  EXPECT_EQ(pushed.logits.row(1)[0], plain.logits.row(1)[0]);
}

TEST(ToyModel, SessionErrors) {
  const auto m = build_model(small_spec());
  ToyModel::Session s(m);
  EXPECT_TRUE(throws_errc([&] { s.push(24); }, Errc::InvalidSpec));
  for (std::size_t i = 0; i < 24; ++i) s.push(1);
  EXPECT_TRUE(throws_errc([&] { s.push(1); }, Errc::SequenceTooLong));
  const std::vector<Token> too_long(25, 1);
  EXPECT_TRUE(throws_errc([&] { forward_with_hooks(m, too_long); }, Errc::SequenceTooLong));
}

TEST(ToyModel, WeightsRoundTrip) {
  const auto m = build_model(small_spec(5));
  const auto path = std::filesystem::temp_directory_path() / "revis_toy_weights.hsd";
  m.save_weights(path);
  const auto back = ToyModel::load_weights(path);
  EXPECT_EQ(back.spec(), m.spec());
  EXPECT_TRUE(std::equal(m.weights().begin(), m.weights().end(), back.weights().begin(), back.weights().end()));
  std::filesystem::remove(path);
}

TEST(ArgmaxToken, LowestIdOnTies) {
  EXPECT_EQ(argmax_token(std::vector<double>{0.1, 0.5, 0.5, 0.2}), 1u);
  EXPECT_EQ(argmax_token(std::vector<double>{3.0}), 0u);
}

TEST(Generate, ZeroAlphaMatchesOffExactly) {
  const auto spec = small_spec(3);
  const auto m = build_model(spec);
  SplitMix64 rng(77);
  const auto vectors = random_vectors(rng, spec);
  for (int p = 0; p < 10; ++p) {
    const std::vector<Token> prompt{kBosToken, static_cast<Token>(4 + rng.next() % 20),
                                    static_cast<Token>(4 + rng.next() % 20)};
    const auto off = generate(m, prompt, {1.6, SteeringMode::Off, 2, std::nullopt}, &vectors, 12);
    const auto zero = generate(m, prompt, {0.0, SteeringMode::SparseGated, 2, -1.0}, &vectors, 12);
    const auto dense0 = generate(m, prompt, {0.0, SteeringMode::Dense, 2, std::nullopt}, &vectors, 12);
    EXPECT_EQ(off.tokens, zero.tokens);
    EXPECT_EQ(off.tokens, dense0.tokens);
    ASSERT_EQ(off.traces.size(), zero.traces.size());
    for (std::size_t t = 0; t < off.traces.size(); ++t) EXPECT_EQ(off.traces[t].risk, zero.traces[t].risk);
  }
}

TEST(Generate, TracesAndLayerCounts) {
  const auto spec = small_spec(4);
  const auto m = build_model(spec);
  SplitMix64 rng(5);
  const auto vectors = random_vectors(rng, spec);
  const std::vector<Token> prompt{1, 9};
  const auto sparse = generate(m, prompt, {1.6, SteeringMode::SparseGated, 1, -1.0}, &vectors, 10);
  ASSERT_FALSE(sparse.traces.empty());
  for (std::size_t t = 0; t < sparse.traces.size(); ++t) {
    const auto& tr = sparse.traces[t];
    EXPECT_EQ(tr.t, t);
    EXPECT_EQ(tr.layer, 1u);
    EXPECT_TRUE(tr.intervened);  // tau = -1 fires unless the state is exactly aligned
    EXPECT_EQ(tr.layers_modified, 1u);
  }
  const auto never = generate(m, prompt, {1.6, SteeringMode::SparseGated, 1, 1.0}, &vectors, 10);
  for (const auto& tr : never.traces) EXPECT_EQ(tr.layers_modified, 0u);
  const auto dense = generate(m, prompt, {1.6, SteeringMode::Dense, 1, std::nullopt}, &vectors, 10);
  for (const auto& tr : dense.traces) EXPECT_EQ(tr.layers_modified, spec.num_layers);
}

TEST(Generate, StopsAtContextLimitAndValidates) {
  const auto spec = small_spec();
  const auto m = build_model(spec);
  const std::vector<Token> prompt(20, 5);
  const auto r = generate(m, prompt, {1.6, SteeringMode::Off, std::nullopt, std::nullopt}, nullptr, 100);
  EXPECT_LE(r.tokens.size(), 5u);
  EXPECT_TRUE(throws_errc([&] { generate(m, {}, {1.6, SteeringMode::Off, {}, {}}, nullptr, 3); },
                          Errc::InvalidConfig));
  EXPECT_TRUE(throws_errc([&] { generate(m, prompt, {1.6, SteeringMode::Dense, {}, {}}, nullptr, 3); },
                          Errc::InvalidConfig));
  SplitMix64 rng(1);
  auto wrong = random_vectors(rng, small_spec());
  wrong.layers.pop_back();
  EXPECT_TRUE(throws_errc([&] { generate(m, prompt, {1.6, SteeringMode::Dense, {}, {}}, &wrong, 3); },
                          Errc::DimensionMismatch));
}

TEST(Generate, DriftLowersRiskAndSteeringPullsBack) {
  // Find a model whose Off run does not stop at EOS early.
  const std::vector<Token> prompt{1, 11, 12};
  const std::size_t target = 2;
  std::optional<ToyModel> m;
  SteeringVectorSet vectors;
  GenerateOptions opts;
  GenerationResult off;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    m = build_model(small_spec(seed));
    SplitMix64 rng(seed + 10);
    vectors = random_vectors(rng, m->spec());
    Drift drift;
    drift.layer = target;
    drift.rate = 0.5;
    const auto& v = vectors.layers[target].perp;
    const double n = kernels::norm(v);
    drift.direction.clear();
    for (double x : v) drift.direction.push_back(-x / n);
    opts.drift = drift;
    off = generate(*m, prompt, {1.6, SteeringMode::Off, target, {}}, &vectors, 12, opts);
    if (off.traces.size() == 12) break;
  }
  ASSERT_EQ(off.traces.size(), 12u);
  // Drift away from v makes risk climb over time.
  EXPECT_GT(off.traces.back().risk, off.traces.front().risk);
  const auto on = generate(*m, prompt, {1.6, SteeringMode::SparseGated, target, -1.0}, &vectors, 12, opts);
  for (const auto& tr : on.traces)
    if (tr.intervened) EXPECT_LT(tr.post_risk, tr.risk);
}

TEST(Generate, SamplingIsSeeded) {
  const auto m = build_model(small_spec(2));
  const std::vector<Token> prompt{1, 4};
  GenerateOptions a;
  a.sampling = Sampling{1.0, 99};
  const auto x = generate(m, prompt, {1.6, SteeringMode::Off, {}, {}}, nullptr, 10, a);
  const auto y = generate(m, prompt, {1.6, SteeringMode::Off, {}, {}}, nullptr, 10, a);
  EXPECT_EQ(x.tokens, y.tokens);
}

}  // namespace
}  // namespace revis
