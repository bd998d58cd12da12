#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cfeval/estimators.hpp"
#include "cfeval/propensity.hpp"
#include "cfeval/sim.hpp"

namespace testkit {

// One mid-size synthetic world shared by every test that only needs "a
// realistic bundle": default feature layout, n = 10000, seed 1. Built once
// per process.
struct SharedWorld {
  cfeval::sim::SimConfig config;
  cfeval::sim::RewardGroundTruth truth;
  cfeval::sim::PolicySet policies;
  cfeval::EvalBundle bundle;
  std::vector<double> exact_lifts;
  cfeval::prop::WeightTable oracle_table;
};

const SharedWorld& shared_world();

// Fresh temp directory under the system temp root; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& stem);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Tiny two-ad world where every probability is computable by hand:
// no context features, one ad feature, identity-link rewards equal to that
// feature. Source picks uniformly, the target prefers the better ad 9:1.
struct TwoAdWorld {
  cfeval::sim::RewardGroundTruth truth;
  cfeval::sim::SoftmaxPolicy source;
  cfeval::sim::SoftmaxPolicy target;
  cfeval::EvalBundle bundle;
};

TwoAdWorld make_two_ad_world();

}  // namespace testkit
