#pragma once

// Synthetic serving environment: ground-truth reward function, source policy
// plus K incrementally improved target policies, paired dataset generation,
// and the exact true-lift oracle used as the recovery denominator.
//
// All randomness flows through counter-based streams keyed by
// (seed, stage tag, request_id, domain), so generation is reproducible and
// independent of thread schedule.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfeval/core.hpp"
#include "cfeval/features.hpp"
#include "cfeval/parallel.hpp"
#include "cfeval/rng.hpp"

namespace cfeval::sim {

enum class Link { sigmoid, identity_clipped };

inline std::string_view link_name(Link l) {
  return l == Link::sigmoid ? "sigmoid" : "identity_clipped";
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Fixed per-experiment linear reward on [x; a; x*a] features. p(y|x,a) never
// depends on the domain; that is the environment's core assumption.
struct RewardGroundTruth {
  std::vector<double> coefficients;
  RewardMode noise_mode = RewardMode::bernoulli;
  double noise_sigma = 0.0;
  Link link = Link::sigmoid;

  // Expected reward for one (context, ad) pair.
  double mean(const Context& x, const Ad& a) const {
    const double z = joint_dot(coefficients, x.features, a.features);
    if (link == Link::sigmoid) return sigmoid(z);
    return std::clamp(z, -kIdentityClip, kIdentityClip);
  }

  static constexpr double kIdentityClip = 1e6;
  bool operator==(const RewardGroundTruth&) const = default;
};

struct SoftmaxPolicy {
  std::vector<double> score_weights;
  double temperature = 1.0;
  double improvement_alpha = 0.0;

  double score(const Context& x, const Ad& a) const {
    return joint_dot(score_weights, x.features, a.features);
  }
  bool operator==(const SoftmaxPolicy&) const = default;
};

struct SimConfig {
  int d = 8;
  int q = 8;
  int inventory_size = 200;
  int candidates_per_request = 20;
  std::size_t n = 50000;
  int K = 3;
  std::vector<double> alphas{0.25, 0.5, 1.0};
  double temperature = 1.0;
  std::uint64_t seed = 1;
  RewardMode reward_mode = RewardMode::bernoulli;
  double noise_sigma = 0.1;

  bool operator==(const SimConfig&) const = default;
};

inline std::vector<std::string> config_violations(const SimConfig& c) {
  std::vector<std::string> out;
  if (c.d < 0 || c.q < 0 || c.d + c.q == 0) {
    out.push_back("d and q must be nonnegative with d + q > 0");
  }
  if (c.candidates_per_request < 2) out.push_back("candidates_per_request must be >= 2");
  if (c.inventory_size < c.candidates_per_request) {
    out.push_back("inventory_size must be >= candidates_per_request");
  }
  if (c.n == 0) out.push_back("n must be positive");
  if (c.K < 1) out.push_back("K must be >= 1");
  if (static_cast<int>(c.alphas.size()) != c.K) {
    out.push_back("alphas must have exactly K entries");
  } else {
    double prev = 0.0;
    for (double a : c.alphas) {
      if (!(a > prev)) {
        out.push_back("alphas must be strictly increasing and positive");
        break;
      }
      prev = a;
    }
  }
  if (!(c.temperature > 0.0)) out.push_back("temperature must be positive");
  if (c.reward_mode == RewardMode::gaussian && !(c.noise_sigma >= 0.0)) {
    out.push_back("noise_sigma must be nonnegative");
  }
  return out;
}

inline void require_valid(const SimConfig& c) {
  const auto violations = config_violations(c);
  if (violations.empty()) return;
  std::string msg = "invalid sim config:";
  for (const auto& v : violations) msg += "\n  - " + v;
  throw std::invalid_argument(msg);
}

namespace detail {

// Softmax selection probabilities over one candidate slate.
inline void candidate_probabilities(const SoftmaxPolicy& policy, const Context& x,
                                    std::span<const Ad* const> ads, std::vector<double>& probs) {
  if (!(policy.temperature > 0.0)) {
    throw std::invalid_argument("SoftmaxPolicy: temperature must be positive");
  }
  probs.resize(ads.size());
  double max_s = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ads.size(); ++i) {
    probs[i] = policy.score(x, *ads[i]) / policy.temperature;
    max_s = std::max(max_s, probs[i]);
  }
  double z = 0.0;
  for (double& p : probs) {
    p = std::exp(p - max_s);
    z += p;
  }
  for (double& p : probs) p /= z;
}

inline std::size_t sample_index(std::span<const double> probs, rng::Stream& stream) {
  const double u = stream.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace detail

inline std::vector<Ad> make_inventory(const SimConfig& c) {
  std::vector<Ad> out(static_cast<std::size_t>(c.inventory_size));
  for (int i = 0; i < c.inventory_size; ++i) {
    auto stream = rng::derive(c.seed, "inventory", static_cast<std::uint64_t>(i));
    Ad& ad = out[static_cast<std::size_t>(i)];
    ad.ad_id = static_cast<AdId>(i);
    ad.features.resize(static_cast<std::size_t>(c.q));
    for (double& f : ad.features) f = stream.normal();
  }
  return out;
}

inline Context draw_context(const SimConfig& c, RequestId rid) {
  auto stream = rng::derive(c.seed, "context", rid);
  Context ctx;
  ctx.request_id = rid;
  ctx.features.resize(static_cast<std::size_t>(c.d));
  for (double& f : ctx.features) f = stream.normal();
  return ctx;
}

// Candidate slate drawn uniformly without replacement from the inventory.
inline std::vector<AdId> draw_candidates(const SimConfig& c, RequestId rid) {
  auto stream = rng::derive(c.seed, "candidates", rid);
  std::vector<AdId> pool(static_cast<std::size_t>(c.inventory_size));
  for (int i = 0; i < c.inventory_size; ++i) pool[static_cast<std::size_t>(i)] = static_cast<AdId>(i);
  std::vector<AdId> out;
  out.reserve(static_cast<std::size_t>(c.candidates_per_request));
  for (int t = 0; t < c.candidates_per_request; ++t) {
    const std::size_t j = static_cast<std::size_t>(t) +
                          static_cast<std::size_t>(stream.below(
                              static_cast<std::uint64_t>(c.inventory_size - t)));
    std::swap(pool[static_cast<std::size_t>(t)], pool[j]);
    out.push_back(pool[static_cast<std::size_t>(t)]);
  }
  return out;
}

// Coefficients sampled i.i.d. standard normal, scaled by 1/sqrt(feature
// count) so the latent score has roughly unit variance.
inline RewardGroundTruth make_ground_truth(const SimConfig& c) {
  if (c.d < 0 || c.q < 0 || c.d + c.q == 0) {
    throw std::invalid_argument("make_ground_truth: empty feature space (d + q must be > 0)");
  }
  const int feat = joint_feature_dim(c.d, c.q);
  auto stream = rng::derive(c.seed, "truth");
  RewardGroundTruth truth;
  truth.coefficients.resize(static_cast<std::size_t>(feat));
  const double scale = 1.0 / std::sqrt(static_cast<double>(feat));
  for (double& v : truth.coefficients) v = stream.normal() * scale;
  truth.noise_mode = c.reward_mode;
  truth.noise_sigma = c.reward_mode == RewardMode::gaussian ? c.noise_sigma : 0.0;
  truth.link = c.reward_mode == RewardMode::bernoulli ? Link::sigmoid : Link::identity_clipped;
  return truth;
}

inline std::vector<std::string> truth_violations(const SimConfig& c,
                                                 const RewardGroundTruth& t) {
  std::vector<std::string> out;
  if (static_cast<int>(t.coefficients.size()) != joint_feature_dim(c.d, c.q)) {
    out.push_back("coefficient length does not match the configured feature layout");
  }
  if (!cfeval::detail::all_finite(t.coefficients)) out.push_back("coefficients must be finite");
  if (t.noise_mode == RewardMode::bernoulli && t.link != Link::sigmoid) {
    out.push_back("bernoulli rewards require the sigmoid link");
  }
  return out;
}

inline double true_reward_mean(const RewardGroundTruth& truth, const Context& x, const Ad& a) {
  return truth.mean(x, a);
}

// Draws one realized reward; bernoulli mode flips a coin with p = mean,
// gaussian mode adds N(0, sigma^2) noise to the mean.
inline double sample_reward(const RewardGroundTruth& truth, const Context& x, const Ad& a,
                            rng::Stream& stream) {
  const double mean = truth.mean(x, a);
  if (truth.noise_mode == RewardMode::bernoulli) {
    return stream.bernoulli(std::clamp(mean, 0.0, 1.0)) ? 1.0 : 0.0;
  }
  return mean + truth.noise_sigma * stream.normal();
}

struct PolicySet {
  SoftmaxPolicy source;
  std::vector<SoftmaxPolicy> targets;
  int attempts = 1;
  bool operator==(const PolicySet&) const = default;
};

namespace detail {

// Exact expected lift of each target over the source on the exact request
// population simulate() will draw (same context/candidate streams), so an
// accepted policy set keeps its lift ordering in the generated bundle.
inline std::vector<double> expected_lifts_on_sim_requests(const SimConfig& c,
                                                          const RewardGroundTruth& truth,
                                                          const PolicySet& policies,
                                                          std::span<const Ad> inventory,
                                                          int threads) {
  const int K = static_cast<int>(policies.targets.size());
  std::vector<double> per_request(c.n * static_cast<std::size_t>(K));
  parallel_for(c.n, threads, [&](std::size_t i) {
    const Context ctx = draw_context(c, static_cast<RequestId>(i));
    const std::vector<AdId> cand_ids = draw_candidates(c, static_cast<RequestId>(i));
    std::vector<const Ad*> ads;
    ads.reserve(cand_ids.size());
    for (AdId id : cand_ids) ads.push_back(&inventory[static_cast<std::size_t>(id)]);
    std::vector<double> mus(ads.size());
    for (std::size_t j = 0; j < ads.size(); ++j) mus[j] = truth.mean(ctx, *ads[j]);
    std::vector<double> probs;
    candidate_probabilities(policies.source, ctx, ads, probs);
    double v_source = 0.0;
    for (std::size_t j = 0; j < ads.size(); ++j) v_source += probs[j] * mus[j];
    for (int k = 0; k < K; ++k) {
      candidate_probabilities(policies.targets[static_cast<std::size_t>(k)], ctx, ads, probs);
      double v = 0.0;
      for (std::size_t j = 0; j < ads.size(); ++j) v += probs[j] * mus[j];
      per_request[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)] = v - v_source;
    }
  });
  std::vector<double> lifts(static_cast<std::size_t>(K), 0.0);
  for (std::size_t i = 0; i < c.n; ++i) {
    for (int k = 0; k < K; ++k) {
      lifts[static_cast<std::size_t>(k)] +=
          per_request[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)];
    }
  }
  for (double& l : lifts) l /= static_cast<double>(c.n);
  return lifts;
}

// Lift ordering must match alpha ordering; equal alphas give identical
// policies and therefore exactly equal lifts.
inline bool lift_ordering_ok(std::span<const double> alphas, std::span<const double> lifts) {
  double prev_alpha = 0.0;
  double prev_lift = 0.0;
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (alphas[k] > prev_alpha) {
      if (!(lifts[k] > prev_lift)) return false;
    } else if (alphas[k] == prev_alpha) {
      if (lifts[k] != prev_lift) return false;
    } else {
      if (!(lifts[k] < prev_lift)) return false;
    }
    prev_alpha = alphas[k];
    prev_lift = lifts[k];
  }
  return true;
}

}  // namespace detail

inline constexpr int kMaxPolicyResamples = 20;

// Source scores are random; target k leans the source toward the true reward
// coefficients by alphas[k]. Resamples the source (up to 20 tries) until the
// exact lifts are ordered like the alphas; failure is surfaced, never
// silently accepted.
inline PolicySet make_policies(const SimConfig& c, const RewardGroundTruth& truth,
                               int threads = 1) {
  const int feat = joint_feature_dim(c.d, c.q);
  if (static_cast<int>(truth.coefficients.size()) != feat) {
    throw std::invalid_argument("make_policies: truth coefficients do not match config layout");
  }
  if (static_cast<int>(c.alphas.size()) != c.K) {
    throw std::invalid_argument("make_policies: alphas must have exactly K entries");
  }
  if (!(c.temperature > 0.0)) {
    throw std::invalid_argument("make_policies: temperature must be positive");
  }

  const std::vector<Ad> inventory = make_inventory(c);
  const double scale = 1.0 / std::sqrt(static_cast<double>(feat));

  for (int attempt = 0; attempt < kMaxPolicyResamples; ++attempt) {
    auto stream = rng::derive(c.seed, "policy-source", static_cast<std::uint64_t>(attempt));
    PolicySet set;
    set.attempts = attempt + 1;
    set.source.temperature = c.temperature;
    set.source.improvement_alpha = 0.0;
    set.source.score_weights.resize(static_cast<std::size_t>(feat));
    for (double& w : set.source.score_weights) w = stream.normal() * scale;

    set.targets.resize(static_cast<std::size_t>(c.K));
    for (int k = 0; k < c.K; ++k) {
      SoftmaxPolicy& t = set.targets[static_cast<std::size_t>(k)];
      t.temperature = c.temperature;
      t.improvement_alpha = c.alphas[static_cast<std::size_t>(k)];
      t.score_weights.resize(static_cast<std::size_t>(feat));
      for (int j = 0; j < feat; ++j) {
        t.score_weights[static_cast<std::size_t>(j)] =
            set.source.score_weights[static_cast<std::size_t>(j)] +
            t.improvement_alpha * truth.coefficients[static_cast<std::size_t>(j)];
      }
    }

    const auto lifts =
        detail::expected_lifts_on_sim_requests(c, truth, set, inventory, threads);
    if (detail::lift_ordering_ok(c.alphas, lifts)) return set;
  }
  throw std::runtime_error(
      "make_policies: target lift ordering failed after " +
      std::to_string(kMaxPolicyResamples) + " source resamples (seed=" +
      std::to_string(c.seed) + "); adjust alphas or pick another seed");
}

// Runs the n shared requests through every policy instance. The source's
// pick gets a realized reward and its exact softmax propensity; target picks
// are recorded unlabeled.
inline EvalBundle simulate(const SimConfig& c, const RewardGroundTruth& truth,
                           const PolicySet& policies, int threads = 1) {
  require_valid(c);
  {
    const auto tv = truth_violations(c, truth);
    if (!tv.empty()) throw std::invalid_argument("simulate: invalid ground truth: " + tv.front());
  }
  if (static_cast<int>(policies.targets.size()) != c.K) {
    throw std::invalid_argument("simulate: policy set does not have K targets");
  }

  EvalBundle b;
  b.meta = BundleMeta{c.d, c.q, c.K, c.n, c.reward_mode, /*oracle_propensities=*/true, c.seed};
  b.inventory = make_inventory(c);
  b.source.resize(c.n);
  b.targets.assign(static_cast<std::size_t>(c.K), {});
  for (auto& rows : b.targets) rows.resize(c.n);
  std::vector<std::vector<AdId>> cand_rows(c.n);

  parallel_for(c.n, threads, [&](std::size_t i) {
    const auto rid = static_cast<RequestId>(i);
    const Context ctx = draw_context(c, rid);
    cand_rows[i] = draw_candidates(c, rid);
    std::vector<const Ad*> ads;
    ads.reserve(cand_rows[i].size());
    for (AdId id : cand_rows[i]) ads.push_back(&b.inventory[static_cast<std::size_t>(id)]);

    std::vector<double> probs;
    detail::candidate_probabilities(policies.source, ctx, ads, probs);
    auto choose = rng::derive(c.seed, "choose", rid, 0);
    const std::size_t picked = detail::sample_index(probs, choose);

    LoggedSample& row = b.source[i];
    row.context = ctx;
    row.ad = *ads[picked];
    row.logged_propensity = probs[picked];
    auto reward_stream = rng::derive(c.seed, "reward", rid);
    row.reward = sample_reward(truth, ctx, row.ad, reward_stream);

    for (int k = 1; k <= c.K; ++k) {
      detail::candidate_probabilities(policies.targets[static_cast<std::size_t>(k - 1)], ctx,
                                      ads, probs);
      auto choose_k = rng::derive(c.seed, "choose", rid, static_cast<std::uint64_t>(k));
      const std::size_t picked_k = detail::sample_index(probs, choose_k);
      TargetSample& trow = b.targets[static_cast<std::size_t>(k - 1)][i];
      trow.context = ctx;
      trow.ad = *ads[picked_k];
      trow.domain = DomainId::target(k);
    }
  });

  b.candidate_sets.reserve(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    b.candidate_sets.emplace(static_cast<RequestId>(i), std::move(cand_rows[i]));
  }
  return b;
}

// Exact lift oracle: for each request, the candidate-set expectation of the
// true reward under each policy, averaged over requests, then differenced.
// No sampling noise; this is Rec's denominator.
inline double exact_true_lift(const SoftmaxPolicy& target_policy,
                              const SoftmaxPolicy& source_policy,
                              const RewardGroundTruth& truth, const EvalBundle& bundle,
                              int threads = 1) {
  const AdIndex ads(bundle.inventory);
  const std::size_t n = bundle.source.size();
  if (n == 0) throw std::invalid_argument("exact_true_lift: empty bundle");
  std::vector<double> per_request(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const LoggedSample& row = bundle.source[i];
    const auto it = bundle.candidate_sets.find(row.context.request_id);
    if (it == bundle.candidate_sets.end()) {
      throw std::runtime_error("exact_true_lift: no candidate set for request_id " +
                               std::to_string(row.context.request_id));
    }
    std::vector<const Ad*> slate;
    slate.reserve(it->second.size());
    for (AdId id : it->second) slate.push_back(&ads.at(id));
    std::vector<double> mus(slate.size());
    for (std::size_t j = 0; j < slate.size(); ++j) mus[j] = truth.mean(row.context, *slate[j]);
    std::vector<double> probs;
    detail::candidate_probabilities(target_policy, row.context, slate, probs);
    double v_target = 0.0;
    for (std::size_t j = 0; j < slate.size(); ++j) v_target += probs[j] * mus[j];
    detail::candidate_probabilities(source_policy, row.context, slate, probs);
    double v_source = 0.0;
    for (std::size_t j = 0; j < slate.size(); ++j) v_source += probs[j] * mus[j];
    per_request[i] = v_target - v_source;
  });
  double sum = 0.0;
  for (double v : per_request) sum += v;
  return sum / static_cast<double>(n);
}

}  // namespace cfeval::sim
