#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "revis/kernels.hpp"
#include "revis/synthetic.hpp"
#include "revis/vectors.hpp"
#include "support.hpp"

namespace revis {
namespace {

using testing::throws_errc;

Vector random_vector(SplitMix64& rng, std::size_t d, double scale = 1.0) {
  Vector v(d);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

TEST(Orthogonalize, PropertiesOnRandomPairs) {
  SplitMix64 rng(42);
  for (std::size_t d : {2u, 8u, 64u, 512u}) {
    for (int trial = 0; trial < 200; ++trial) {
      const double prior_scale = std::pow(10.0, -6.0 + 9.0 * rng.uniform());
      const auto r = random_vector(rng, d);
      const auto p = random_vector(rng, d, prior_scale);
      const auto res = orthogonalize(r, p);
      ASSERT_FALSE(res.flags.any());
      const double rn = kernels::norm(r), pn = kernels::norm(p);
      EXPECT_LE(std::abs(kernels::dot(res.vector, p)), 1e-9 * rn * pn);

      const double proj = kernels::dot(r, p) / pn;
      const double lhs = rn * rn;
      const double rhs = kernels::dot(res.vector, res.vector) + proj * proj;
      EXPECT_LE(std::abs(lhs - rhs), 1e-9 * lhs);

      const auto again = orthogonalize(res.vector, p);
      for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(again.vector[i], res.vector[i], 1e-12);
    }
  }
}

TEST(Orthogonalize, HandComputedExample) {
  const Vector r{3.0, 4.0, 0.0};
  const Vector p{1.0, 0.0, 0.0};
  const auto res = orthogonalize(r, p);
  EXPECT_DOUBLE_EQ(res.vector[0], 0.0);
  EXPECT_DOUBLE_EQ(res.vector[1], 4.0);
  EXPECT_DOUBLE_EQ(res.vector[2], 0.0);
  // not renormalised
  EXPECT_DOUBLE_EQ(kernels::norm(res.vector), 4.0);
}

TEST(Orthogonalize, ZeroPriorKeepsRaw) {
  const Vector r{1.0, -2.0, 0.5};
  auto res = orthogonalize(r, Vector(3, 0.0));
  EXPECT_TRUE(res.flags.zero_prior);
  EXPECT_EQ(res.vector, r);
  res = orthogonalize(r, Vector{1e-14, 0.0, 0.0});
  EXPECT_TRUE(res.flags.zero_prior);
  EXPECT_EQ(res.vector, r);
  res = orthogonalize(Vector(3, 0.0), Vector(3, 0.0));
  EXPECT_TRUE(res.flags.zero_prior);
}

TEST(Orthogonalize, ParallelInputsGiveZero) {
  const Vector p{0.3, -1.2, 2.0, 0.7};
  Vector r(4);
  for (std::size_t i = 0; i < 4; ++i) r[i] = -2.5 * p[i];
  const auto res = orthogonalize(r, p);
  EXPECT_TRUE(res.flags.parallel);
  EXPECT_EQ(kernels::norm(res.vector), 0.0);
}

TEST(Orthogonalize, LengthMismatch) {
  EXPECT_TRUE(throws_errc([] { orthogonalize(Vector(3, 1.0), Vector(4, 1.0)); }, Errc::DimensionMismatch));
}

TEST(Cosine, BasicsAndErrors) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 0}, Vector{0, 2}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 1}, Vector{-3, -3}), -1.0);
  EXPECT_TRUE(throws_errc([] { cosine_similarity(Vector{0, 0}, Vector{1, 0}); }, Errc::ZeroVector));
  EXPECT_TRUE(throws_errc([] { cosine_similarity(Vector{1}, Vector{1, 0}); }, Errc::DimensionMismatch));
}

TEST(VectorExtraction, MeansMatchOracle) {
  SplitMix64 rng(8);
  const auto dump = testing::random_dump(rng, 13, 3, 6);
  const auto raw = compute_raw_vector(dump, 2);
  const auto prior = compute_prior_vector(dump, 2);
  for (std::size_t j = 0; j < 6; ++j) {
    long double r = 0, p = 0;
    for (std::size_t i = 0; i < 13; ++i) {
      r += static_cast<long double>(dump.state(i, 0, 2)[j]) - dump.state(i, 2, 2)[j];
      p += static_cast<long double>(dump.state(i, 3, 2)[j]) - dump.state(i, 4, 2)[j];
    }
    EXPECT_NEAR(raw[j], static_cast<double>(r / 13), 1e-12);
    EXPECT_NEAR(prior[j], static_cast<double>(p / 13), 1e-12);
  }
}

TEST(VectorExtraction, ConditionOrderInFileDoesNotMatter) {
  SplitMix64 rng(8);
  auto dump = testing::random_dump(rng, 5, 2, 4);
  // Same data with conditions listed in reverse order.
  auto rev = dump;
  rev.metadata.conditions_present = {ConditionLabel::NOIMG_UNK, ConditionLabel::NOIMG_HALL, ConditionLabel::NOIMG_GT,
                                     ConditionLabel::HALL, ConditionLabel::GT};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 5; ++c)
      for (std::size_t l = 0; l < 2; ++l) {
        auto src = dump.state(i, c, l);
        auto dst = rev.state(i, 4 - c, l);
        std::copy(src.begin(), src.end(), dst.begin());
      }
  EXPECT_EQ(compute_raw_vector(dump, 1), compute_raw_vector(rev, 1));
  EXPECT_EQ(compute_prior_vector(dump, 0), compute_prior_vector(rev, 0));
}

TEST(VectorExtraction, MissingConditionAndBadLayer) {
  SplitMix64 rng(1);
  const auto dump = testing::random_dump(rng, 2, 2, 3, {ConditionLabel::GT, ConditionLabel::NOIMG_HALL,
                                                        ConditionLabel::NOIMG_UNK});
  EXPECT_TRUE(throws_errc([&] { compute_raw_vector(dump, 0); }, Errc::MissingCondition));
  EXPECT_NO_THROW(compute_prior_vector(dump, 0));
  EXPECT_TRUE(throws_errc([&] { build_vector_set(dump); }, Errc::MissingCondition));
  EXPECT_TRUE(throws_errc([&] { compute_prior_vector(dump, 2); }, Errc::DimensionMismatch));
}

TEST(VectorExtraction, RecoversPlantedDirectionsWithoutNoise) {
  const auto world = make_world(30, 16, 0.9, 0.0, 4);
  const auto dump = synthesize_counterfactual_dump(world, 6, 16);
  const auto set = build_vector_set(dump);
  const auto target = prior_orthogonal_visual_dir(world);
  for (const auto& lv : set.layers) {
    EXPECT_FALSE(lv.degenerate());
    EXPECT_LE(std::abs(cosine_similarity(lv.perp, world.planted_prior_dir)), 1e-6);
    EXPECT_GE(cosine_similarity(lv.perp, target), 0.999);
    EXPECT_NEAR(lv.entanglement_cos, 0.9, 1e-5);
  }
}

TEST(VectorPersistence, RoundTripIsF32Rounded) {
  const auto world = make_world(10, 8, 0.5, 0.05, 2);
  const auto set = build_vector_set(synthesize_counterfactual_dump(world, 4, 8));
  const auto path = std::filesystem::temp_directory_path() / "revis_vectors_rt.hsd";
  save_vector_set(set, path);
  ASSERT_TRUE(std::filesystem::exists(vector_sidecar_path(path)));
  const auto back = load_vector_set(path);
  ASSERT_EQ(back.num_layers(), 4u);
  ASSERT_EQ(back.hidden_dim, 8u);
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_EQ(back.layers[l].raw[j], static_cast<double>(static_cast<float>(set.layers[l].raw[j])));
      EXPECT_EQ(back.layers[l].perp[j], static_cast<double>(static_cast<float>(set.layers[l].perp[j])));
    }
    EXPECT_EQ(back.layers[l].flags, set.layers[l].flags);
    EXPECT_DOUBLE_EQ(back.layers[l].entanglement_cos, set.layers[l].entanglement_cos);
  }
  // Saving a reloaded set is a fixed point.
  save_vector_set(back, path);
  const auto again = load_vector_set(path);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(again.layers[l].prior, back.layers[l].prior);

  std::filesystem::remove(vector_sidecar_path(path));
  EXPECT_TRUE(throws_errc([&] { load_vector_set(path); }, Errc::IoError));
  std::filesystem::remove(path);
}

TEST(VectorPersistence, RejectsOrdinaryDump) {
  SplitMix64 rng(3);
  const auto path = std::filesystem::temp_directory_path() / "revis_vectors_plain.hsd";
  save_dump(testing::random_dump(rng, 2, 2, 2), path);
  EXPECT_TRUE(throws_errc([&] { load_vector_set(path); }, Errc::ShapeMismatch));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace revis
