#pragma once

#include <filesystem>

#include "streamcl/embedding_store.hpp"
#include "streamcl/harness.hpp"

namespace streamcl::test {

// Separated clusters: K=100, F=16, spread 0.05, seed 7, with the per-class
// train/test counts of the 100-class CIFAR benchmark (500/100).
inline SyntheticParams standard_fixture() {
  SyntheticParams p;
  p.num_classes = 100;
  p.dim = 16;
  p.per_class_train = 500;
  p.per_class_test = 100;
  p.cluster_spread = 0.05;
  p.mean_scale = 1.0;
  p.seed = 7;
  return p;
}

// Same layout with overlapping clusters.
inline SyntheticParams overlap_fixture() {
  auto p = standard_fixture();
  p.cluster_spread = 0.5;
  return p;
}

inline RunConfig fixture_config(const std::filesystem::path& manifest, Method m,
                                std::size_t step_size = 5, std::size_t budget = 0) {
  RunConfig c;
  c.dataset = manifest;
  c.method = m;
  c.step_size = step_size;
  c.exemplar_budget = budget;
  c.seeds = {1, 2, 3, 4};
  return c;
}

// Frozen from the reference run on the fixtures above with seeds {1, 2, 3, 4}
// (ER and NME runs use Q = 2000). Any drift means numerics or RNG streams
// changed.
namespace reference {
inline constexpr double kStandardCandidateAvg = 1.0;
inline constexpr double kStandardCandidateLast = 1.0;
inline constexpr double kStandardFinetuneLast = 0.1733;
inline constexpr double kOverlapCandidateAvg = 0.39111490290755002;
inline constexpr double kOverlapFullAvg = 0.39297188078046824;
}  // namespace reference

}  // namespace streamcl::test
