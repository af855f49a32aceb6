#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "revis/error.hpp"
#include "revis/rng.hpp"
#include "revis/tensorio.hpp"

namespace revis::testing {

// Runs `fn` and checks it throws revis::Error with `code`.
inline ::testing::AssertionResult throws_errc(const std::function<void()>& fn, Errc code) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == code) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "got " << errc_name(e.code()) << " (" << e.what() << "), want "
                                         << errc_name(code);
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "non-revis exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "nothing thrown, want " << errc_name(code);
}

inline HiddenStateDump random_dump(SplitMix64& rng, std::size_t n, std::size_t layers, std::size_t dim,
                                   std::vector<ConditionLabel> conds = {kAllConditions.begin(), kAllConditions.end()}) {
  DumpMetadata m;
  m.model_name = "test-model";
  m.num_samples = n;
  m.num_layers = layers;
  m.hidden_dim = dim;
  m.conditions_present = std::move(conds);
  auto dump = HiddenStateDump::zeros(std::move(m));
  for (auto& x : dump.states) x = static_cast<float>(rng.normal());
  return dump;
}

}  // namespace revis::testing
