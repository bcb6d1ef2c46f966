#include "balloc/core.hpp"

namespace balloc {

namespace {
constexpr double kMajorizationSlack = 1e-12;
}

bool majorizes(std::span<const double> v, std::span<const double> u) {
  if (v.size() != u.size()) throw ValidationError("majorizes: length mismatch");
  std::vector<double> vs(v.begin(), v.end());
  std::vector<double> us(u.begin(), u.end());
  std::sort(vs.begin(), vs.end(), std::greater<double>());
  std::sort(us.begin(), us.end(), std::greater<double>());
  return majorizes_prefix(vs, us);
}

bool majorizes_prefix(std::span<const double> v, std::span<const double> u,
                      std::size_t* first_violation) {
  if (v.size() != u.size()) throw ValidationError("majorizes_prefix: length mismatch");
  double sv = 0.0, su = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    sv += v[k];
    su += u[k];
    if (sv < su - kMajorizationSlack) {
      if (first_violation) *first_violation = k;
      return false;
    }
  }
  return true;
}

}  // namespace balloc
