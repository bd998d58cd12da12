#pragma once

// Density-ratio weights between each target policy and the source policy,
// in two modes: oracle (closed-form softmax propensities) and estimated
// (one logistic classifier per target, ratio from its odds). Also weight
// hygiene: clipping, ESS, and rank diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfeval/core.hpp"
#include "cfeval/features.hpp"
#include "cfeval/parallel.hpp"
#include "cfeval/rng.hpp"
#include "cfeval/sim.hpp"

namespace cfeval::prop {

enum class WeightMode { oracle, estimated };

inline std::string_view weight_mode_name(WeightMode m) {
  return m == WeightMode::oracle ? "oracle" : "estimated";
}

inline std::optional<WeightMode> parse_weight_mode(std::string_view s) {
  if (s == "oracle") return WeightMode::oracle;
  if (s == "estimated") return WeightMode::estimated;
  return std::nullopt;
}

// n x K table of density ratios, row i aligned with the i-th source row.
// clipped[k] accumulates across clip passes so clipping stays idempotent,
// table included.
struct WeightTable {
  std::vector<RequestId> request_ids;
  std::vector<std::vector<double>> w;
  WeightMode mode = WeightMode::oracle;
  std::optional<double> clip_cap;
  std::vector<std::size_t> clipped;
  std::vector<std::size_t> saturated;

  std::size_t rows() const { return w.size(); }
  int targets() const { return w.empty() ? 0 : static_cast<int>(w.front().size()); }
  bool operator==(const WeightTable&) const = default;
};

inline std::vector<std::string> table_violations(const WeightTable& t) {
  std::vector<std::string> out;
  if (t.request_ids.size() != t.w.size()) out.push_back("request_ids and rows disagree");
  const std::size_t k = t.w.empty() ? 0 : t.w.front().size();
  for (const auto& row : t.w) {
    if (row.size() != k) {
      out.push_back("ragged weight rows");
      break;
    }
  }
  for (const auto& row : t.w) {
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) {
        out.push_back("weights must be finite and nonnegative");
        return out;
      }
      if (t.clip_cap && v > *t.clip_cap) {
        out.push_back("weight exceeds the recorded clip cap");
        return out;
      }
    }
  }
  return out;
}

// Exact softmax selection probability of `a` within the candidate slate.
inline double oracle_propensity(const sim::SoftmaxPolicy& policy, const Context& x,
                                std::span<const Ad* const> candidates, const Ad& a) {
  std::ptrdiff_t pos = -1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i]->ad_id == a.ad_id) {
      pos = static_cast<std::ptrdiff_t>(i);
      break;
    }
  }
  if (pos < 0) {
    throw std::invalid_argument("oracle_propensity: ad " + std::to_string(a.ad_id) +
                                " is not in the candidate slate");
  }
  std::vector<double> probs;
  sim::detail::candidate_probabilities(policy, x, candidates, probs);
  return probs[static_cast<std::size_t>(pos)];
}

inline double oracle_propensity(const sim::SoftmaxPolicy& policy, const Context& x,
                                std::span<const Ad> candidates, const Ad& a) {
  std::vector<const Ad*> ptrs;
  ptrs.reserve(candidates.size());
  for (const Ad& c : candidates) ptrs.push_back(&c);
  return oracle_propensity(policy, x, std::span<const Ad* const>(ptrs), a);
}

// w[i][k] = p_target_k(a_i | x_i) / p_source(a_i | x_i) at the logged ad a_i.
// Each slate's probabilities are computed once per policy, so the ratio is
// bit-identical to dividing two oracle_propensity calls.
inline WeightTable oracle_weights(const EvalBundle& bundle,
                                  const sim::SoftmaxPolicy& source_policy,
                                  const std::vector<sim::SoftmaxPolicy>& target_policies,
                                  int threads = 1) {
  if (target_policies.empty()) {
    throw std::invalid_argument("oracle_weights: no target policies");
  }
  const AdIndex ads(bundle.inventory);
  const std::size_t n = bundle.source.size();
  const std::size_t K = target_policies.size();

  WeightTable t;
  t.mode = WeightMode::oracle;
  t.request_ids.resize(n);
  t.w.assign(n, std::vector<double>(K, 0.0));
  t.clipped.assign(K, 0);
  t.saturated.assign(K, 0);

  parallel_for(n, threads, [&](std::size_t i) {
    const LoggedSample& row = bundle.source[i];
    t.request_ids[i] = row.context.request_id;
    const auto it = bundle.candidate_sets.find(row.context.request_id);
    if (it == bundle.candidate_sets.end()) {
      throw std::runtime_error("oracle_weights: no candidate set for request_id " +
                               std::to_string(row.context.request_id));
    }
    std::vector<const Ad*> slate;
    slate.reserve(it->second.size());
    std::ptrdiff_t pos = -1;
    for (AdId id : it->second) {
      if (id == row.ad.ad_id) pos = static_cast<std::ptrdiff_t>(slate.size());
      slate.push_back(&ads.at(id));
    }
    if (pos < 0) {
      throw std::runtime_error("oracle_weights: logged ad not in candidate set for request_id " +
                               std::to_string(row.context.request_id));
    }
    std::vector<double> probs;
    sim::detail::candidate_probabilities(source_policy, row.context, slate, probs);
    const double p_source = probs[static_cast<std::size_t>(pos)];
    if (!(p_source > 0.0)) {
      throw std::runtime_error("oracle_weights: overlap violation, source propensity is zero "
                               "for request_id " +
                               std::to_string(row.context.request_id));
    }
    for (std::size_t k = 0; k < K; ++k) {
      sim::detail::candidate_probabilities(target_policies[k], row.context, slate, probs);
      t.w[i][k] = probs[static_cast<std::size_t>(pos)] / p_source;
    }
  });
  return t;
}

// Logistic classifier separating one target domain's rows from the source
// rows on shared (context, ad) features. Its odds recover the density ratio.
struct DensityRatioModel {
  int k = 0;
  std::vector<double> theta;
  double prior_ratio = 1.0;

  double logit(const Context& x, const Ad& a) const {
    const std::size_t joint = theta.size() - 1;
    return joint_dot(std::span<const double>(theta.data(), joint), x.features, a.features) +
           theta.back();
  }
  double prob(const Context& x, const Ad& a) const { return sim::sigmoid(logit(x, a)); }
  bool operator==(const DensityRatioModel&) const = default;
};

struct RatioHyper {
  double learning_rate = 0.1;
  int epochs = 60;
  int batch_size = 1024;
  double l2 = 1e-6;
  std::uint64_t seed = 7;
  bool operator==(const RatioHyper&) const = default;
};

// Minibatch SGD on log-loss with L2, label 1 for target rows and 0 for
// source rows. Shuffle order comes from the seed alone, so fits repeat
// exactly.
inline DensityRatioModel fit_density_ratio(const std::vector<LoggedSample>& source_rows,
                                           const std::vector<TargetSample>& target_rows,
                                           const RatioHyper& hyper, int k) {
  if (source_rows.empty() || target_rows.empty()) {
    throw std::invalid_argument("fit_density_ratio: both datasets must be nonempty");
  }
  if (!(hyper.learning_rate > 0.0) || hyper.epochs < 1 || hyper.batch_size < 1) {
    throw std::invalid_argument("fit_density_ratio: bad hyperparameters");
  }

  const Context& c0 = source_rows.front().context;
  const Ad& a0 = source_rows.front().ad;
  const FeatureMap fmap{static_cast<int>(c0.features.size()),
                        static_cast<int>(a0.features.size())};
  const std::size_t dim = static_cast<std::size_t>(fmap.dim());

  const std::size_t n_s = source_rows.size();
  const std::size_t n_t = target_rows.size();
  const std::size_t n = n_s + n_t;

  DensityRatioModel model;
  model.k = k;
  model.theta.assign(dim, 0.0);
  model.prior_ratio = static_cast<double>(n_s) / static_cast<double>(n_t);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> phi(dim);
  std::vector<double> grad(dim);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    auto stream = rng::derive(hyper.seed, "ratio-shuffle", static_cast<std::uint64_t>(k),
                              static_cast<std::uint64_t>(epoch));
    stream.shuffle(order);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hyper.batch_size));
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t t = start; t < stop; ++t) {
        const std::size_t idx = order[t];
        double y;
        if (idx < n_s) {
          fmap.write(source_rows[idx].context, source_rows[idx].ad, phi);
          y = 0.0;
        } else {
          const TargetSample& row = target_rows[idx - n_s];
          fmap.write(row.context, row.ad, phi);
          y = 1.0;
        }
        double z = 0.0;
        for (std::size_t j = 0; j < dim; ++j) z += model.theta[j] * phi[j];
        // log(1 + e^z) - y z, the stable softplus form.
        batch_loss += (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
        const double err = sim::sigmoid(z) - y;
        for (std::size_t j = 0; j < dim; ++j) grad[j] += err * phi[j];
      }
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("fit_density_ratio: loss diverged at epoch " +
                                 std::to_string(epoch) + "; reduce the learning rate");
      }
      for (std::size_t j = 0; j < dim; ++j) {
        model.theta[j] -= hyper.learning_rate * (grad[j] * inv_b + hyper.l2 * model.theta[j]);
      }
    }
  }
  return model;
}

inline constexpr double kMaxClassifierProb = 1.0 - 1e-6;

// Density ratios from classifier odds at the source-logged ads:
// w = q/(1-q) * (n_S/n_Tk). Probabilities at 1 are pulled back to 1 - 1e-6
// and counted as saturated.
inline WeightTable estimate_weights(const std::vector<DensityRatioModel>& models,
                                    const EvalBundle& bundle, int threads = 1) {
  if (models.empty()) throw std::invalid_argument("estimate_weights: no models");
  if (static_cast<int>(models.size()) != bundle.meta.K) {
    throw std::invalid_argument("estimate_weights: expected " + std::to_string(bundle.meta.K) +
                                " models, got " + std::to_string(models.size()));
  }
  const std::size_t n = bundle.source.size();
  const std::size_t K = models.size();

  WeightTable t;
  t.mode = WeightMode::estimated;
  t.request_ids.resize(n);
  t.w.assign(n, std::vector<double>(K, 0.0));
  t.clipped.assign(K, 0);
  t.saturated.assign(K, 0);

  std::vector<std::vector<std::size_t>> sat(K, std::vector<std::size_t>(n, 0));
  parallel_for(n, threads, [&](std::size_t i) {
    const LoggedSample& row = bundle.source[i];
    t.request_ids[i] = row.context.request_id;
    for (std::size_t k = 0; k < K; ++k) {
      double q = models[k].prob(row.context, row.ad);
      if (q > kMaxClassifierProb) {
        q = kMaxClassifierProb;
        sat[k][i] = 1;
      }
      t.w[i][k] = q / (1.0 - q) * models[k].prior_ratio;
    }
  });
  for (std::size_t k = 0; k < K; ++k) {
    t.saturated[k] = std::accumulate(sat[k].begin(), sat[k].end(), std::size_t{0});
  }
  return t;
}

// w' = min(w, cap). Re-clipping at the same cap changes nothing, counts
// included; an infinite cap is the identity.
inline WeightTable clip_weights(const WeightTable& table, double cap) {
  if (!(cap > 0.0)) throw std::invalid_argument("clip_weights: cap must be positive");
  if (std::isinf(cap)) return table;
  WeightTable out = table;
  out.clip_cap = cap;
  if (out.clipped.size() != static_cast<std::size_t>(out.targets())) {
    out.clipped.assign(static_cast<std::size_t>(out.targets()), 0);
  }
  for (auto& row : out.w) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] > cap) {
        row[k] = cap;
        ++out.clipped[k];
      }
    }
  }
  return out;
}

inline double effective_sample_size(std::span<const double> w) {
  double s = 0.0;
  double s2 = 0.0;
  for (double v : w) {
    s += v;
    s2 += v * v;
  }
  if (s2 == 0.0) return 0.0;
  return s * s / s2;
}

struct WeightColumnStats {
  int k = 0;
  double mean = 0.0;
  double max = 0.0;
  double ess = 0.0;
  double clipped_fraction = 0.0;
  std::size_t saturated = 0;
  bool operator==(const WeightColumnStats&) const = default;
};

inline std::vector<WeightColumnStats> weight_diagnostics(const WeightTable& t) {
  const std::size_t n = t.rows();
  const std::size_t K = static_cast<std::size_t>(t.targets());
  std::vector<WeightColumnStats> out(K);
  std::vector<double> col(n);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < n; ++i) col[i] = t.w[i][k];
    WeightColumnStats& s = out[k];
    s.k = static_cast<int>(k) + 1;
    s.max = n == 0 ? 0.0 : *std::max_element(col.begin(), col.end());
    s.mean = n == 0 ? 0.0 : std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
    s.ess = effective_sample_size(col);
    s.clipped_fraction =
        n == 0 || k >= t.clipped.size()
            ? 0.0
            : static_cast<double>(t.clipped[k]) / static_cast<double>(n);
    s.saturated = k < t.saturated.size() ? t.saturated[k] : 0;
  }
  return out;
}

namespace detail {

// Average ranks (1-based), ties sharing the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

// Mann-Whitney AUC: probability a positive outscores a negative, ties at 1/2.
inline double mann_whitney_auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) {
    throw std::invalid_argument("mann_whitney_auc: both score sets must be nonempty");
  }
  std::vector<double> all;
  all.reserve(positive.size() + negative.size());
  all.insert(all.end(), positive.begin(), positive.end());
  all.insert(all.end(), negative.begin(), negative.end());
  const std::vector<double> r = detail::average_ranks(all);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < positive.size(); ++i) rank_sum += r[i];
  const double np = static_cast<double>(positive.size());
  const double nn = static_cast<double>(negative.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

inline double classifier_auc(const DensityRatioModel& model,
                             const std::vector<LoggedSample>& source_rows,
                             const std::vector<TargetSample>& target_rows) {
  std::vector<double> pos(target_rows.size());
  std::vector<double> neg(source_rows.size());
  for (std::size_t i = 0; i < target_rows.size(); ++i) {
    pos[i] = model.logit(target_rows[i].context, target_rows[i].ad);
  }
  for (std::size_t i = 0; i < source_rows.size(); ++i) {
    neg[i] = model.logit(source_rows[i].context, source_rows[i].ad);
  }
  return mann_whitney_auc(pos, neg);
}

// Spearman rank correlation: Pearson correlation of average ranks.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
  }
  const std::vector<double> ra = detail::average_ranks(a);
  const std::vector<double> rb = detail::average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw std::invalid_argument("spearman: a series has zero rank variance");
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace cfeval::prop
