#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "cfeval/estimators.hpp"
#include "cfeval/sim.hpp"
#include "helpers.hpp"

using namespace cfeval;

namespace {

// Chi-square quantile via the Wilson-Hilferty cube approximation.
double chi_square_quantile(double df, double z) {
  const double a = 2.0 / (9.0 * df);
  const double inner = 1.0 - a + z * std::sqrt(a);
  return df * inner * inner * inner;
}

sim::SimConfig tiny_config() {
  sim::SimConfig c;
  c.d = 1;
  c.q = 1;
  c.inventory_size = 6;
  c.candidates_per_request = 3;
  c.n = 60;
  c.K = 2;
  c.alphas = {0.5, 1.0};
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("config validation catches bad shapes", "[sim]") {
  sim::SimConfig c = tiny_config();
  REQUIRE(sim::config_violations(c).empty());
  c.candidates_per_request = 1;
  REQUIRE_FALSE(sim::config_violations(c).empty());
  c = tiny_config();
  c.alphas = {1.0, 0.5};
  REQUIRE_FALSE(sim::config_violations(c).empty());
  c = tiny_config();
  c.alphas = {0.5};
  REQUIRE_FALSE(sim::config_violations(c).empty());
  c = tiny_config();
  c.inventory_size = 2;
  REQUIRE_FALSE(sim::config_violations(c).empty());
  c = tiny_config();
  c.d = 0;
  c.q = 0;
  REQUIRE_FALSE(sim::config_violations(c).empty());
}

TEST_CASE("sigmoid is stable at the extremes", "[sim]") {
  REQUIRE(sim::sigmoid(0.0) == 0.5);
  REQUIRE(sim::sigmoid(10.0) == Catch::Approx(1.0).margin(1e-4));
  REQUIRE(sim::sigmoid(-800.0) >= 0.0);
  REQUIRE(std::isfinite(sim::sigmoid(800.0)));
  REQUIRE(sim::sigmoid(3.0) + sim::sigmoid(-3.0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("ground truth coefficients scale with the feature count", "[sim]") {
  sim::SimConfig c;
  c.d = 6000;
  c.q = 6000;
  c.inventory_size = 2;
  c.candidates_per_request = 2;
  const auto truth = sim::make_ground_truth(c);
  const auto n = static_cast<double>(truth.coefficients.size());
  REQUIRE(truth.coefficients.size() == static_cast<std::size_t>(joint_feature_dim(c.d, c.q)));
  double sq = 0.0;
  for (double v : truth.coefficients) sq += v * v;
  const double var_ratio = (sq / n) * n;  // empirical variance times feature count
  REQUIRE(var_ratio == Catch::Approx(1.0).margin(0.1));
}

TEST_CASE("ground truth requires at least one feature", "[sim]") {
  sim::SimConfig c;
  c.d = 0;
  c.q = 0;
  REQUIRE_THROWS_AS(sim::make_ground_truth(c), std::invalid_argument);
}

TEST_CASE("ground truth link follows the reward mode", "[sim]") {
  sim::SimConfig c = tiny_config();
  REQUIRE(sim::make_ground_truth(c).link == sim::Link::sigmoid);
  c.reward_mode = RewardMode::gaussian;
  REQUIRE(sim::make_ground_truth(c).link == sim::Link::identity_clipped);
}

TEST_CASE("identity link clips extreme means", "[sim]") {
  sim::RewardGroundTruth t;
  t.coefficients = {1e9};
  t.link = sim::Link::identity_clipped;
  t.noise_mode = RewardMode::gaussian;
  REQUIRE(t.mean(Context{0, {}}, Ad{0, {1.0}}) == 1e6);
  REQUIRE(t.mean(Context{0, {}}, Ad{0, {-1.0}}) == -1e6);
}

TEST_CASE("true mean reduces to the ad feature in the tiny world", "[sim]") {
  const auto w = testkit::make_two_ad_world();
  REQUIRE(w.truth.mean(Context{0, {}}, w.bundle.inventory[0]) == 0.2);
  REQUIRE(w.truth.mean(Context{0, {}}, w.bundle.inventory[1]) == 0.8);
}

TEST_CASE("degenerate success probabilities never flip", "[sim]") {
  sim::RewardGroundTruth t;
  t.coefficients = {-5.0};
  t.link = sim::Link::identity_clipped;
  t.noise_mode = RewardMode::bernoulli;
  const Context x{0, {}};
  const Ad a{0, {1.0}};
  auto s = rng::derive(1, "degenerate");
  for (int i = 0; i < 200; ++i) REQUIRE(sim::sample_reward(t, x, a, s) == 0.0);
  t.coefficients = {5.0};
  for (int i = 0; i < 200; ++i) REQUIRE(sim::sample_reward(t, x, a, s) == 1.0);
}

TEST_CASE("bernoulli rewards hit the configured click rate", "[sim]") {
  sim::RewardGroundTruth t;
  t.coefficients = {std::log(0.3 / 0.7)};
  t.link = sim::Link::sigmoid;
  t.noise_mode = RewardMode::bernoulli;
  const Context x{0, {}};
  const Ad a{0, {1.0}};
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto s = rng::derive(2, "click", static_cast<std::uint64_t>(i));
    sum += sim::sample_reward(t, x, a, s);
  }
  REQUIRE(sum / n == Catch::Approx(0.3).margin(0.01));
}

TEST_CASE("gaussian rewards carry the configured noise", "[sim]") {
  sim::RewardGroundTruth t;
  t.coefficients = {1.0};
  t.link = sim::Link::identity_clipped;
  t.noise_mode = RewardMode::gaussian;
  t.noise_sigma = 0.1;
  const Context x{0, {}};
  const Ad a{0, {0.5}};
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    auto s = rng::derive(3, "noise", static_cast<std::uint64_t>(i));
    const double y = sim::sample_reward(t, x, a, s);
    sum += y;
    sq += y * y;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  REQUIRE(mean == Catch::Approx(0.5).margin(0.002));
  REQUIRE(sd == Catch::Approx(0.1).margin(0.005));
}

TEST_CASE("inventory ads are distinct and deterministic", "[sim]") {
  const sim::SimConfig c = tiny_config();
  const auto inv = sim::make_inventory(c);
  REQUIRE(inv.size() == static_cast<std::size_t>(c.inventory_size));
  std::set<AdId> ids;
  for (const Ad& a : inv) {
    ids.insert(a.ad_id);
    REQUIRE(a.features.size() == static_cast<std::size_t>(c.q));
  }
  REQUIRE(ids.size() == inv.size());
  REQUIRE(inv == sim::make_inventory(c));
}

TEST_CASE("candidate slates draw without replacement", "[sim]") {
  const sim::SimConfig c = tiny_config();
  for (RequestId rid = 0; rid < 30; ++rid) {
    const auto cands = sim::draw_candidates(c, rid);
    REQUIRE(cands.size() == static_cast<std::size_t>(c.candidates_per_request));
    std::set<AdId> seen(cands.begin(), cands.end());
    REQUIRE(seen.size() == cands.size());
    for (AdId id : cands) REQUIRE(id < static_cast<AdId>(c.inventory_size));
  }
}

TEST_CASE("softmax slate probabilities sum to one", "[sim]") {
  const auto& w = testkit::shared_world();
  const auto& b = w.bundle;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& cands = b.candidate_sets.at(b.source[i].context.request_id);
    std::vector<Ad> slate;
    for (AdId id : cands) slate.push_back(b.inventory[id]);
    double total = 0.0;
    for (const Ad& a : slate) {
      const double p = prop::oracle_propensity(w.policies.source, b.source[i].context,
                                               std::span<const Ad>(slate), a);
      REQUIRE(p > 0.0);
      total += p;
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("policy construction orders exact lifts like the alphas", "[sim]") {
  const auto& w = testkit::shared_world();
  REQUIRE(w.exact_lifts.size() == 3);
  REQUIRE(w.exact_lifts[0] > 0.0);
  REQUIRE(w.exact_lifts[1] > w.exact_lifts[0]);
  REQUIRE(w.exact_lifts[2] > w.exact_lifts[1]);
}

TEST_CASE("equal alphas give identical target policies", "[sim]") {
  sim::SimConfig c = tiny_config();
  c.alphas = {0.5, 0.5};
  const auto truth = sim::make_ground_truth(c);
  const auto policies = sim::make_policies(c, truth);
  REQUIRE(policies.targets[0] == policies.targets[1]);
}

TEST_CASE("zero alphas reproduce the source policy with zero lift", "[sim]") {
  sim::SimConfig c = tiny_config();
  c.alphas = {0.0, 0.0};
  const auto truth = sim::make_ground_truth(c);
  const auto policies = sim::make_policies(c, truth);
  REQUIRE(policies.targets[0].score_weights == policies.source.score_weights);
  REQUIRE(policies.targets[1].score_weights == policies.source.score_weights);

  sim::SimConfig valid = tiny_config();
  const auto vt = sim::make_ground_truth(valid);
  const auto vp = sim::make_policies(valid, vt);
  const auto bundle = sim::simulate(valid, vt, vp);
  REQUIRE(sim::exact_true_lift(vp.source, vp.source, vt, bundle) == 0.0);
}

TEST_CASE("unorderable lifts are reported, not silently accepted", "[sim]") {
  sim::SimConfig c = tiny_config();
  sim::RewardGroundTruth flat;
  flat.coefficients.assign(static_cast<std::size_t>(joint_feature_dim(c.d, c.q)), 0.0);
  flat.link = sim::Link::sigmoid;
  flat.noise_mode = RewardMode::bernoulli;
  REQUIRE_THROWS_AS(sim::make_policies(c, flat), std::runtime_error);
}

TEST_CASE("simulation is reproducible", "[sim]") {
  const sim::SimConfig c = tiny_config();
  const auto truth = sim::make_ground_truth(c);
  const auto policies = sim::make_policies(c, truth);
  const auto a = sim::simulate(c, truth, policies);
  const auto b = sim::simulate(c, truth, policies);
  REQUIRE(a == b);
  REQUIRE(validate_bundle(a).empty());
}

TEST_CASE("simulation respects the bundle contract", "[sim]") {
  const auto& w = testkit::shared_world();
  const auto& b = w.bundle;
  REQUIRE(b.meta.n == w.config.n);
  REQUIRE(b.meta.K == w.config.K);
  REQUIRE(b.meta.oracle_propensities);
  for (std::size_t i = 0; i < 50; ++i) {
    REQUIRE(b.source[i].logged_propensity.has_value());
    REQUIRE(*b.source[i].logged_propensity > 0.0);
    REQUIRE(*b.source[i].logged_propensity <= 1.0);
    const double y = b.source[i].reward;
    REQUIRE((y == 0.0 || y == 1.0));
  }
}

TEST_CASE("identical policies produce matching pick distributions", "[sim]") {
  sim::SimConfig c;
  c.d = 2;
  c.q = 2;
  c.inventory_size = 30;
  c.candidates_per_request = 5;
  c.n = 50000;
  c.K = 1;
  c.alphas = {0.5};
  c.seed = 7;
  const auto truth = sim::make_ground_truth(c);
  const auto base = sim::make_policies(c, truth);
  sim::PolicySet same;
  same.source = base.source;
  same.targets = {base.source};
  const auto bundle = sim::simulate(c, truth, same);

  std::vector<double> src_counts(static_cast<std::size_t>(c.inventory_size), 0.0);
  std::vector<double> tgt_counts(src_counts);
  for (std::size_t i = 0; i < bundle.source.size(); ++i) {
    src_counts[bundle.source[i].ad.ad_id] += 1.0;
    tgt_counts[bundle.targets[0][i].ad.ad_id] += 1.0;
  }
  double stat = 0.0;
  double df = -1.0;
  for (std::size_t a = 0; a < src_counts.size(); ++a) {
    const double total = src_counts[a] + tgt_counts[a];
    if (total == 0.0) continue;
    const double diff = src_counts[a] - tgt_counts[a];
    stat += diff * diff / total;
    df += 1.0;
  }
  REQUIRE(df > 0.0);
  REQUIRE(stat < chi_square_quantile(df, 3.0902));  // 0.999 quantile
}

TEST_CASE("exact lift agrees with Monte Carlo on a small instance", "[sim]") {
  sim::SimConfig c;
  c.d = 1;
  c.q = 1;
  c.inventory_size = 8;
  c.candidates_per_request = 4;
  c.n = 5;
  c.K = 1;
  c.alphas = {1.0};
  c.seed = 13;
  const auto truth = sim::make_ground_truth(c);
  const auto policies = sim::make_policies(c, truth);
  const auto bundle = sim::simulate(c, truth, policies);
  const double exact = sim::exact_true_lift(policies.targets[0], policies.source, truth, bundle);

  const int trials = 200000;
  double sum = 0.0, sq = 0.0;
  auto pick_stream = rng::derive(99, "mc-pick");
  auto reward_stream = rng::derive(99, "mc-reward");
  std::vector<double> probs;
  for (int t = 0; t < trials; ++t) {
    double lift = 0.0;
    for (const LoggedSample& row : bundle.source) {
      const auto& cands = bundle.candidate_sets.at(row.context.request_id);
      std::vector<const Ad*> ads;
      for (AdId id : cands) ads.push_back(&bundle.inventory[id]);
      double pair_diff = 0.0;
      for (int side = 0; side < 2; ++side) {
        const auto& pol = side == 0 ? policies.targets[0] : policies.source;
        sim::detail::candidate_probabilities(pol, row.context, ads, probs);
        const std::size_t pick = sim::detail::sample_index(probs, pick_stream);
        const double y = sim::sample_reward(truth, row.context, *ads[pick], reward_stream);
        pair_diff += side == 0 ? y : -y;
      }
      lift += pair_diff;
    }
    lift /= static_cast<double>(bundle.source.size());
    sum += lift;
    sq += lift * lift;
  }
  const double mc = sum / trials;
  const double se = std::sqrt((sq / trials - mc * mc) / trials);
  REQUIRE(std::abs(mc - exact) < 4.0 * se);
}

TEST_CASE("simulation rejects mismatched policy sets", "[sim]") {
  const sim::SimConfig c = tiny_config();
  const auto truth = sim::make_ground_truth(c);
  auto policies = sim::make_policies(c, truth);
  policies.targets.pop_back();
  REQUIRE_THROWS_AS(sim::simulate(c, truth, policies), std::invalid_argument);
}
