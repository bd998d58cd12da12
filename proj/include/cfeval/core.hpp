#pragma once

// Shared data model: contexts, ads, per-domain samples, and the bundle that
// ties the K+1 paired datasets together. Types are immutable-by-convention
// after construction and safe to share across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cfeval {

using RequestId = std::uint64_t;
using AdId = std::uint32_t;

struct Context {
  RequestId request_id = 0;
  std::vector<double> features;
  bool operator==(const Context&) const = default;
};

struct Ad {
  AdId ad_id = 0;
  std::vector<double> features;
  bool operator==(const Ad&) const = default;
};

// Source or Target(k) with k in 1..K. Index 0 is the source.
struct DomainId {
  int index = 0;

  static DomainId source() { return DomainId{0}; }
  static DomainId target(int k) {
    if (k < 1) throw std::out_of_range("DomainId::target: k must be >= 1");
    return DomainId{k};
  }
  bool is_source() const { return index == 0; }
  bool operator==(const DomainId&) const = default;
};

enum class RewardMode { bernoulli, gaussian };

inline std::string_view reward_mode_name(RewardMode m) {
  return m == RewardMode::bernoulli ? "bernoulli" : "gaussian";
}

// One labeled source-domain record. logged_propensity is present only when
// the bundle was produced with known policies (oracle mode).
struct LoggedSample {
  Context context;
  Ad ad;
  double reward = 0.0;
  std::optional<double> logged_propensity;
  bool operator==(const LoggedSample&) const = default;
};

// One unlabeled target-domain record: same request, the ad policy T_k chose.
struct TargetSample {
  Context context;
  Ad ad;
  DomainId domain;
  bool operator==(const TargetSample&) const = default;
};

struct BundleMeta {
  int d = 0;
  int q = 0;
  int K = 0;
  std::size_t n = 0;
  RewardMode reward_mode = RewardMode::bernoulli;
  bool oracle_propensities = false;
  std::uint64_t seed = 0;
  bool operator==(const BundleMeta&) const = default;
};

// The paired datasets {D_S, D_T_1 .. D_T_K} over shared requests, plus the
// ad inventory and the per-request candidate sets every policy drew from.
struct EvalBundle {
  std::vector<LoggedSample> source;
  std::vector<std::vector<TargetSample>> targets;
  std::vector<Ad> inventory;
  std::unordered_map<RequestId, std::vector<AdId>> candidate_sets;
  BundleMeta meta;
  bool operator==(const EvalBundle&) const = default;
};

// ad_id -> Ad lookup, built once per pass over a bundle.
class AdIndex {
 public:
  explicit AdIndex(std::span<const Ad> ads) {
    index_.reserve(ads.size());
    for (const Ad& ad : ads) index_.emplace(ad.ad_id, &ad);
  }

  const Ad* find(AdId id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : it->second;
  }

  const Ad& at(AdId id) const {
    const Ad* ad = find(id);
    if (ad == nullptr) {
      throw std::out_of_range("AdIndex: ad_id " + std::to_string(id) + " not in inventory");
    }
    return *ad;
  }

 private:
  std::unordered_map<AdId, const Ad*> index_;
};

namespace detail {

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

}  // namespace detail

// Checks every bundle invariant; returns one message per violation, empty
// when the bundle is valid. Violations are data, not failures.
inline std::vector<std::string> validate_bundle(const EvalBundle& b) {
  std::vector<std::string> out;
  const auto& m = b.meta;

  if (m.d < 0 || m.q < 0 || m.d + m.q == 0) {
    out.push_back(detail::cat("meta: invalid dimensions d=", m.d, " q=", m.q));
  }
  if (m.K < 1) out.push_back(detail::cat("meta: K must be >= 1, got ", m.K));

  if (b.source.size() != m.n) {
    out.push_back(detail::cat("length mismatch: source has ", b.source.size(),
                              " rows, expected n=", m.n));
  }
  if (static_cast<int>(b.targets.size()) != m.K) {
    out.push_back(detail::cat("length mismatch: bundle has ", b.targets.size(),
                              " target datasets, expected K=", m.K));
    return out;  // downstream checks assume K lists exist
  }
  for (int k = 1; k <= m.K; ++k) {
    const auto& rows = b.targets[static_cast<std::size_t>(k - 1)];
    if (rows.size() != m.n) {
      out.push_back(detail::cat("length mismatch: target ", k, " has ", rows.size(),
                                " rows, expected n=", m.n));
    }
  }

  AdIndex ads(b.inventory);
  {
    std::unordered_map<AdId, std::size_t> seen;
    for (std::size_t i = 0; i < b.inventory.size(); ++i) {
      const Ad& ad = b.inventory[i];
      if (!seen.emplace(ad.ad_id, i).second) {
        out.push_back(detail::cat("inventory row ", i, ": duplicate ad_id ", ad.ad_id));
      }
      if (static_cast<int>(ad.features.size()) != m.q || !detail::all_finite(ad.features)) {
        out.push_back(detail::cat("inventory row ", i, ": ad features must be ", m.q,
                                  " finite values"));
      }
    }
  }

  const auto check_ad = [&](const Ad& ad, const std::string& where) {
    if (static_cast<int>(ad.features.size()) != m.q || !detail::all_finite(ad.features)) {
      out.push_back(where + ": ad features must be " + std::to_string(m.q) + " finite values");
      return;
    }
    const Ad* inv = ads.find(ad.ad_id);
    if (inv == nullptr) {
      out.push_back(where + ": ad_id " + std::to_string(ad.ad_id) + " not in inventory");
    } else if (inv->features != ad.features) {
      out.push_back(where + ": ad features disagree with inventory entry " +
                    std::to_string(ad.ad_id));
    }
  };
  const auto check_candidates = [&](RequestId rid, AdId chosen, const std::string& where) {
    const auto it = b.candidate_sets.find(rid);
    if (it == b.candidate_sets.end()) {
      out.push_back(where + ": no candidate set recorded for request_id " + std::to_string(rid));
      return;
    }
    for (AdId id : it->second) {
      if (ads.find(id) == nullptr) {
        out.push_back(detail::cat("candidate set for request_id ", rid, ": ad_id ", id,
                                  " not in inventory"));
      }
    }
    if (std::find(it->second.begin(), it->second.end(), chosen) == it->second.end()) {
      out.push_back(where + ": chosen ad_id " + std::to_string(chosen) +
                    " not in the request's candidate set");
    }
  };

  std::unordered_map<RequestId, std::size_t> source_rows;
  source_rows.reserve(b.source.size());
  for (std::size_t i = 0; i < b.source.size(); ++i) {
    const LoggedSample& row = b.source[i];
    const std::string where = detail::cat("source row ", i);
    if (!source_rows.emplace(row.context.request_id, i).second) {
      out.push_back(where + ": duplicate request_id " + std::to_string(row.context.request_id));
    }
    if (static_cast<int>(row.context.features.size()) != m.d ||
        !detail::all_finite(row.context.features)) {
      out.push_back(where + ": context features must be " + std::to_string(m.d) +
                    " finite values");
    }
    check_ad(row.ad, where);
    check_candidates(row.context.request_id, row.ad.ad_id, where);
    if (!std::isfinite(row.reward)) {
      out.push_back(where + ": reward must be finite");
    } else if (m.reward_mode == RewardMode::bernoulli && row.reward != 0.0 &&
               row.reward != 1.0) {
      out.push_back(where + ": reward must be 0 or 1 in bernoulli mode");
    }
    if (row.logged_propensity.has_value()) {
      const double p = *row.logged_propensity;
      if (!(p > 0.0) || p > 1.0 || !std::isfinite(p)) {
        out.push_back(where + ": logged_propensity must lie in (0, 1]");
      }
      if (!m.oracle_propensities) {
        out.push_back(where + ": logged_propensity present but bundle is not oracle mode");
      }
    } else if (m.oracle_propensities) {
      out.push_back(where + ": logged_propensity missing in oracle mode");
    }
  }

  for (int k = 1; k <= m.K; ++k) {
    const auto& rows = b.targets[static_cast<std::size_t>(k - 1)];
    std::unordered_map<RequestId, std::size_t> seen;
    seen.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const TargetSample& row = rows[i];
      const std::string where = detail::cat("target ", k, " row ", i);
      if (row.domain != DomainId::target(k)) {
        out.push_back(where + ": domain tag does not match dataset index " + std::to_string(k));
      }
      if (!seen.emplace(row.context.request_id, i).second) {
        out.push_back(where + ": duplicate request_id " +
                      std::to_string(row.context.request_id));
      }
      const auto src = source_rows.find(row.context.request_id);
      if (src == source_rows.end()) {
        out.push_back(where + ": request_id " + std::to_string(row.context.request_id) +
                      " not present in source");
      } else if (b.source[src->second].context.features != row.context.features) {
        out.push_back(where + ": context features differ from the paired source row");
      }
      check_ad(row.ad, where);
      check_candidates(row.context.request_id, row.ad.ad_id, where);
    }
  }

  return out;
}

struct RowPair {
  const LoggedSample* source = nullptr;
  const TargetSample* target = nullptr;
};

// Pairs D_S with D_T_k by request_id, in ascending request_id order. On-disk
// row order is deliberately not a correctness dependency.
inline std::vector<RowPair> pair_rows(const EvalBundle& b, int k) {
  if (k < 1 || k > b.meta.K) {
    throw std::out_of_range(detail::cat("pair_rows: target index ", k, " out of range 1..",
                                        b.meta.K));
  }
  const auto& rows = b.targets[static_cast<std::size_t>(k - 1)];
  std::unordered_map<RequestId, const TargetSample*> by_rid;
  by_rid.reserve(rows.size());
  for (const TargetSample& row : rows) {
    if (!by_rid.emplace(row.context.request_id, &row).second) {
      throw std::runtime_error(detail::cat("pair_rows: duplicate request_id ",
                                           row.context.request_id, " in target ", k));
    }
  }

  std::vector<const LoggedSample*> ordered;
  ordered.reserve(b.source.size());
  for (const LoggedSample& row : b.source) ordered.push_back(&row);
  std::sort(ordered.begin(), ordered.end(), [](const LoggedSample* a, const LoggedSample* b2) {
    return a->context.request_id < b2->context.request_id;
  });

  std::vector<RowPair> out;
  out.reserve(ordered.size());
  for (const LoggedSample* src : ordered) {
    const auto it = by_rid.find(src->context.request_id);
    if (it == by_rid.end()) {
      throw std::runtime_error(detail::cat("pair_rows: request_id ", src->context.request_id,
                                           " has no row in target ", k));
    }
    out.push_back(RowPair{src, it->second});
  }
  return out;
}

}  // namespace cfeval
