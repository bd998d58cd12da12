#pragma once

// Lift estimators (direct method on a reward model, IPS on logged rewards)
// and the recovery metric suite: Rec per target, then the mean, deviation
// and coefficient-of-variance aggregates used to rank methods.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfeval/core.hpp"
#include "cfeval/propensity.hpp"
#include "cfeval/reward_model.hpp"
#include "cfeval/sim.hpp"

namespace cfeval::est {

enum class Method { proposed, baseline, ips };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::proposed: return "proposed";
    case Method::baseline: return "baseline";
    default: return "ips";
  }
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "proposed") return Method::proposed;
  if (s == "baseline") return Method::baseline;
  if (s == "ips") return Method::ips;
  return std::nullopt;
}

struct LiftEstimate {
  int k = 0;
  Method method = Method::baseline;
  double value = 0.0;
  std::size_t n = 0;
  bool operator==(const LiftEstimate&) const = default;
};

// Near-zero guard for the recovery ratio's denominator.
inline constexpr double kDefaultTau = 1e-8;

// Direct method with an arbitrary scorer h(x,a): mean over paired rows of
// h(target pick) - h(source pick). Constant shifts in h cancel exactly.
template <typename H>
LiftEstimate estimate_lift_dm_with(H&& h, const EvalBundle& bundle, int k, Method tag) {
  const std::vector<RowPair> pairs = pair_rows(bundle, k);
  if (pairs.empty()) throw std::invalid_argument("estimate_lift_dm: empty datasets");
  double sum = 0.0;
  for (const RowPair& p : pairs) {
    sum += h(p.target->context, p.target->ad) - h(p.source->context, p.source->ad);
  }
  LiftEstimate out;
  out.k = k;
  out.method = tag;
  out.value = sum / static_cast<double>(pairs.size());
  out.n = pairs.size();
  return out;
}

inline LiftEstimate estimate_lift_dm(const reward::RewardModel& model, const EvalBundle& bundle,
                                     int k) {
  const Method tag = model.meta.weight_mode == reward::TrainMode::proposed ? Method::proposed
                                                                           : Method::baseline;
  return estimate_lift_dm_with(
      [&model](const Context& x, const Ad& a) { return model.predict(x, a); }, bundle, k, tag);
}

// IPS lift: weighted mean reward minus unweighted mean reward. Plain mode
// divides by n (unbiased under exact weights); self-normalized divides by
// the weight sum (lower variance, the default).
inline LiftEstimate estimate_lift_ips(const std::vector<LoggedSample>& rows,
                                      const prop::WeightTable& table, int k,
                                      bool self_normalized = true) {
  if (rows.empty()) throw std::invalid_argument("estimate_lift_ips: empty dataset");
  if (k < 1 || k > table.targets()) {
    throw std::out_of_range("estimate_lift_ips: target index " + std::to_string(k) +
                            " outside 1.." + std::to_string(table.targets()));
  }
  if (table.rows() != rows.size()) {
    throw std::invalid_argument("estimate_lift_ips: weight table has " +
                                std::to_string(table.rows()) + " rows, data has " +
                                std::to_string(rows.size()));
  }
  const std::size_t col = static_cast<std::size_t>(k - 1);
  double w_sum = 0.0;
  double wy_sum = 0.0;
  double y_sum = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (table.request_ids[i] != rows[i].context.request_id) {
      throw std::invalid_argument(
          "estimate_lift_ips: weight table is not aligned with the rows at index " +
          std::to_string(i));
    }
    const double w = table.w[i][col];
    w_sum += w;
    wy_sum += w * rows[i].reward;
    y_sum += rows[i].reward;
  }
  if (w_sum == 0.0) {
    throw std::runtime_error("estimate_lift_ips: all-zero weight column for target " +
                             std::to_string(k));
  }
  const double n = static_cast<double>(rows.size());
  LiftEstimate out;
  out.k = k;
  out.method = Method::ips;
  out.value = (self_normalized ? wy_sum / w_sum : wy_sum / n) - y_sum / n;
  out.n = rows.size();
  return out;
}

// Rec = estimated / true, undefined when the true lift is inside the guard
// band. Undefined is a first-class value here, never a NaN.
inline std::optional<double> recovery(double estimated, double true_lift,
                                      double tau = kDefaultTau) {
  if (!(std::abs(true_lift) > tau)) return std::nullopt;
  return estimated / true_lift;
}

struct RecAggregate {
  std::optional<double> rec_avg;
  std::optional<double> rec_dev_mad;
  std::optional<double> rec_dev_std;
  std::optional<double> rec_cv;
  bool operator==(const RecAggregate&) const = default;
};

// rec_dev_mad is the mean absolute deviation about rec_avg and is the
// deviation that defines rec_cv; the standard-deviation variant is reported
// alongside it for comparison only.
inline RecAggregate rec_aggregate(std::span<const std::optional<double>> recs,
                                  double tau = kDefaultTau) {
  RecAggregate out;
  if (recs.empty()) return out;
  for (const auto& r : recs) {
    if (!r) return out;
  }
  const double n = static_cast<double>(recs.size());
  double avg = 0.0;
  for (const auto& r : recs) avg += *r;
  avg /= n;
  double mad = 0.0;
  double var = 0.0;
  for (const auto& r : recs) {
    const double d = *r - avg;
    mad += std::abs(d);
    var += d * d;
  }
  mad /= n;
  var /= n;
  out.rec_avg = avg;
  out.rec_dev_mad = mad;
  out.rec_dev_std = std::sqrt(var);
  if (std::abs(avg) > tau) out.rec_cv = mad / avg;
  return out;
}

struct TargetRecovery {
  int k = 0;
  double true_lift = 0.0;
  double estimated_lift = 0.0;
  std::optional<double> rec;
  bool operator==(const TargetRecovery&) const = default;
};

struct RecoveryReport {
  Method method = Method::baseline;
  std::vector<TargetRecovery> targets;
  RecAggregate aggregate;
  double tau = kDefaultTau;
  bool degenerate = false;
  bool operator==(const RecoveryReport&) const = default;
};

// Assembles per-target recovery plus aggregates from externally supplied
// true lifts (index k-1) and K estimates tagged with the same method.
inline RecoveryReport make_recovery_report(std::span<const double> true_lifts,
                                           const std::vector<LiftEstimate>& estimates,
                                           double tau = kDefaultTau) {
  if (estimates.empty()) throw std::invalid_argument("make_recovery_report: no estimates");
  const int K = static_cast<int>(true_lifts.size());
  std::vector<const LiftEstimate*> by_k(static_cast<std::size_t>(K), nullptr);
  for (const LiftEstimate& e : estimates) {
    if (e.k < 1 || e.k > K) {
      throw std::invalid_argument("make_recovery_report: estimate for target " +
                                  std::to_string(e.k) + " outside 1.." + std::to_string(K));
    }
    if (by_k[static_cast<std::size_t>(e.k - 1)]) {
      throw std::invalid_argument("make_recovery_report: duplicate estimate for target " +
                                  std::to_string(e.k));
    }
    if (e.method != estimates.front().method) {
      throw std::invalid_argument("make_recovery_report: mixed method tags");
    }
    by_k[static_cast<std::size_t>(e.k - 1)] = &e;
  }
  for (int k = 1; k <= K; ++k) {
    if (!by_k[static_cast<std::size_t>(k - 1)]) {
      throw std::invalid_argument("make_recovery_report: missing estimate for target " +
                                  std::to_string(k));
    }
  }

  RecoveryReport report;
  report.method = estimates.front().method;
  report.tau = tau;
  report.degenerate = K == 1;
  std::vector<std::optional<double>> recs;
  recs.reserve(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    const LiftEstimate& e = *by_k[static_cast<std::size_t>(k - 1)];
    TargetRecovery t;
    t.k = k;
    t.true_lift = true_lifts[static_cast<std::size_t>(k - 1)];
    t.estimated_lift = e.value;
    t.rec = recovery(e.value, t.true_lift, tau);
    recs.push_back(t.rec);
    report.targets.push_back(std::move(t));
  }
  report.aggregate = rec_aggregate(recs, tau);
  return report;
}

inline std::vector<double> exact_true_lifts(const EvalBundle& bundle,
                                            const sim::RewardGroundTruth& truth,
                                            const sim::PolicySet& policies, int threads = 1) {
  std::vector<double> out;
  out.reserve(policies.targets.size());
  for (const auto& target : policies.targets) {
    out.push_back(sim::exact_true_lift(target, policies.source, truth, bundle, threads));
  }
  return out;
}

// Synthetic-mode evaluation: true lifts from the exact oracle.
inline RecoveryReport evaluate_method(const EvalBundle& bundle,
                                      const sim::RewardGroundTruth& truth,
                                      const sim::PolicySet& policies,
                                      const std::vector<LiftEstimate>& estimates,
                                      double tau = kDefaultTau, int threads = 1) {
  const std::vector<double> lifts = exact_true_lifts(bundle, truth, policies, threads);
  return make_recovery_report(lifts, estimates, tau);
}

}  // namespace cfeval::est
