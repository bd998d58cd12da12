#include "helpers.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace testkit {

using namespace cfeval;

const SharedWorld& shared_world() {
  static const SharedWorld world = [] {
    SharedWorld w;
    w.config.n = 10000;
    w.config.seed = 1;
    w.truth = sim::make_ground_truth(w.config);
    w.policies = sim::make_policies(w.config, w.truth);
    w.bundle = sim::simulate(w.config, w.truth, w.policies);
    w.exact_lifts = est::exact_true_lifts(w.bundle, w.truth, w.policies);
    w.oracle_table = prop::oracle_weights(w.bundle, w.policies.source, w.policies.targets);
    return w;
  }();
  return world;
}

TempDir::TempDir(const std::string& stem) {
  static std::atomic<unsigned> counter{0};
  const unsigned id = counter.fetch_add(1);
  path_ = std::filesystem::temp_directory_path() /
          ("cfeval_test_" + stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(id));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

TwoAdWorld make_two_ad_world() {
  TwoAdWorld w;
  w.truth.coefficients = {1.0};
  w.truth.noise_mode = RewardMode::gaussian;
  w.truth.noise_sigma = 0.0;
  w.truth.link = sim::Link::identity_clipped;

  w.source.score_weights = {0.0};
  w.source.temperature = 1.0;
  // Score gap of ln 9 between the 0.8-ad and the 0.2-ad, so the target
  // selects them with probabilities 0.9 and 0.1.
  w.target.score_weights = {std::log(9.0) / 0.6};
  w.target.temperature = 1.0;

  EvalBundle& b = w.bundle;
  b.meta = BundleMeta{0, 1, 1, 1, RewardMode::gaussian, true, 0};
  b.inventory = {Ad{0, {0.2}}, Ad{1, {0.8}}};
  LoggedSample row;
  row.context = Context{0, {}};
  row.ad = b.inventory[1];
  row.reward = 0.8;
  row.logged_propensity = 0.5;
  b.source = {row};
  TargetSample trow;
  trow.context = row.context;
  trow.ad = b.inventory[1];
  trow.domain = DomainId::target(1);
  b.targets = {{trow}};
  b.candidate_sets.emplace(RequestId{0}, std::vector<AdId>{0, 1});
  return w;
}

}  // namespace testkit
