#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace balloc {

/// Thrown for invalid inputs, broken preconditions and malformed specs.
/// The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bin loads plus the total allocated weight. LoadT is std::uint64_t for
/// unit balls and double when ball weights are enabled.
template <typename LoadT>
struct LoadVector {
  std::vector<LoadT> loads;
  LoadT total_weight{};

  std::size_t n() const { return loads.size(); }

  static LoadVector zeros(std::size_t n) {
    LoadVector lv;
    lv.loads.assign(n, LoadT{});
    lv.total_weight = LoadT{};
    return lv;
  }

  static LoadVector from_loads(std::vector<LoadT> x) {
    LoadVector lv;
    lv.loads = std::move(x);
    lv.total_weight = LoadT{};
    for (LoadT v : lv.loads) lv.total_weight += v;
    return lv;
  }

  void add(std::size_t bin, LoadT w) {
    loads[bin] += w;
    total_weight += w;
  }

  double mean() const {
    return static_cast<double>(total_weight) / static_cast<double>(n());
  }

  void validate() const {
    if (loads.empty()) throw ValidationError("LoadVector: n must be >= 1");
    LoadT sum{};
    for (LoadT v : loads) {
      if (v < LoadT{}) throw ValidationError("LoadVector: negative load");
      sum += v;
    }
    if constexpr (std::is_floating_point_v<LoadT>) {
      double tol = 1e-9 * std::max(1.0, std::abs(static_cast<double>(total_weight)));
      if (std::abs(static_cast<double>(sum - total_weight)) > tol)
        throw ValidationError("LoadVector: sum(loads) != total_weight");
    } else {
      if (sum != total_weight)
        throw ValidationError("LoadVector: sum(loads) != total_weight");
    }
  }
};

using LoadVectorU = LoadVector<std::uint64_t>;
using LoadVectorR = LoadVector<double>;

/// Loads minus the running average, sorted non-increasing. Sums to ~0.
struct NormalizedLoads {
  std::vector<double> y;
};

/// Permutation of bins: sigma[rank] = bin id, rank 0 = heaviest.
/// Ties are broken by ascending bin id so traces are reproducible.
struct Ordering {
  std::vector<std::uint32_t> sigma;
};

template <typename LoadT>
NormalizedLoads normalize(const LoadVector<LoadT>& lv) {
  const double mean = lv.mean();
  NormalizedLoads out;
  out.y.reserve(lv.n());
  for (LoadT v : lv.loads) out.y.push_back(static_cast<double>(v) - mean);
  std::sort(out.y.begin(), out.y.end(), std::greater<double>());
  return out;
}

/// Max load minus the average load; equals normalize(lv).y[0].
template <typename LoadT>
double gap(const LoadVector<LoadT>& lv) {
  const double mean = lv.mean();
  LoadT mx = lv.loads[0];
  for (LoadT v : lv.loads) mx = std::max(mx, v);
  return static_cast<double>(mx) - mean;
}

template <typename LoadT>
Ordering ordering_by_load(const LoadVector<LoadT>& lv) {
  Ordering ord;
  ord.sigma.resize(lv.n());
  for (std::uint32_t i = 0; i < lv.n(); ++i) ord.sigma[i] = i;
  std::sort(ord.sigma.begin(), ord.sigma.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (lv.loads[a] != lv.loads[b]) return lv.loads[a] > lv.loads[b];
              return a < b;
            });
  return ord;
}

/// Classic majorization: both vectors are sorted non-increasing internally,
/// then every prefix sum of v must be >= the one of u (1e-12 slack).
bool majorizes(std::span<const double> v, std::span<const double> u);

/// Prefix-sum comparison in the given index order, without sorting. This is
/// the order-sensitive variant needed for rank-indexed expected-ball vectors.
bool majorizes_prefix(std::span<const double> v, std::span<const double> u,
                      std::size_t* first_violation = nullptr);

}  // namespace balloc
