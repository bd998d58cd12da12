#pragma once

// Feature layouts shared by the simulator, the propensity classifier and the
// reward model: [context; ad; elementwise context*ad interaction block], with
// an extra trailing bias for model inputs.

#include <algorithm>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfeval/core.hpp"

namespace cfeval {

inline int joint_feature_dim(int d, int q) { return d + q + std::min(d, q); }

// w . [x; a; x*a] without materializing the feature vector.
inline double joint_dot(std::span<const double> w, std::span<const double> x,
                        std::span<const double> a) {
  const std::size_t d = x.size();
  const std::size_t q = a.size();
  const std::size_t m = std::min(d, q);
  if (w.size() != d + q + m) {
    throw std::invalid_argument("joint_dot: weight length " + std::to_string(w.size()) +
                                " does not match feature layout " + std::to_string(d + q + m));
  }
  double s = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < d; ++i) s += w[j++] * x[i];
  for (std::size_t i = 0; i < q; ++i) s += w[j++] * a[i];
  for (std::size_t i = 0; i < m; ++i) s += w[j++] * x[i] * a[i];
  return s;
}

// Model feature layout: [context d; ad q; interaction min(d,q); bias 1].
struct FeatureMap {
  int d = 0;
  int q = 0;

  int dim() const { return joint_feature_dim(d, q) + 1; }

  void write(const Context& x, const Ad& a, std::span<double> out) const {
    if (static_cast<int>(x.features.size()) != d || static_cast<int>(a.features.size()) != q) {
      throw std::invalid_argument("FeatureMap: input dimensions (" +
                                  std::to_string(x.features.size()) + ", " +
                                  std::to_string(a.features.size()) + ") do not match layout (" +
                                  std::to_string(d) + ", " + std::to_string(q) + ")");
    }
    if (static_cast<int>(out.size()) != dim()) {
      throw std::invalid_argument("FeatureMap: output span has wrong length");
    }
    const int m = std::min(d, q);
    std::size_t j = 0;
    for (int i = 0; i < d; ++i) out[j++] = x.features[static_cast<std::size_t>(i)];
    for (int i = 0; i < q; ++i) out[j++] = a.features[static_cast<std::size_t>(i)];
    for (int i = 0; i < m; ++i) {
      out[j++] = x.features[static_cast<std::size_t>(i)] * a.features[static_cast<std::size_t>(i)];
    }
    out[j] = 1.0;
  }

  std::vector<double> operator()(const Context& x, const Ad& a) const {
    std::vector<double> out(static_cast<std::size_t>(dim()));
    write(x, a, out);
    return out;
  }

  bool operator==(const FeatureMap&) const = default;
};

// Deterministic concatenation per the FeatureMap layout, dimensions taken
// from the inputs.
inline std::vector<double> featurize(const Context& x, const Ad& a) {
  const FeatureMap fmap{static_cast<int>(x.features.size()), static_cast<int>(a.features.size())};
  return fmap(x, a);
}

}  // namespace cfeval
