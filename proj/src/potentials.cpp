#include "balloc/potentials.hpp"

#include <cmath>
#include <limits>

namespace balloc {

namespace {
constexpr double kExpCap = 700.0;  // exp(700) ~ 1e304; beyond that report +inf
constexpr double kInf = std::numeric_limits<double>::infinity();

double clipped_exp_sum(const NormalizedLoads& y, double rate, double offset, bool partial) {
  double sum = 0.0;
  for (double yi : y.y) {
    const double excess = yi - offset;
    if (partial && excess < 0.0) continue;
    const double e = rate * std::max(excess, 0.0);
    if (e > kExpCap) return kInf;
    sum += std::exp(e);
  }
  return sum;
}
}  // namespace

std::uint64_t PotentialConfig::k(int j) const {
  const double ln_n = std::log(static_cast<double>(n));
  const double cap_log = ln_n / 7.0;                                   // log n^{1/7}
  const double raw_log = std::pow(v, j + 1) + 3.0 * std::log(ln_n);    // log(e^{v^{j+1}} ln^3 n)
  const double k_log = std::min(raw_log, cap_log);
  const auto k = static_cast<std::uint64_t>(std::floor(std::exp(k_log)));
  return std::max<std::uint64_t>(k, 1);
}

PotentialConfig layered_constants(double a, double b, double c, double alpha2, std::size_t n) {
  if (!(a >= 1.0) || !(b >= 1.0)) throw ValidationError("layered_constants: a, b must be >= 1");
  if (!(c > 0.0)) throw ValidationError("layered_constants: c must be > 0");
  if (!(alpha2 > 0.0 && alpha2 < 1.0))
    throw ValidationError("layered_constants: alpha2 must be in (0,1)");
  if (n < 1) throw ValidationError("layered_constants: n must be >= 1");
  PotentialConfig cfg;
  cfg.alpha2 = alpha2;
  cfg.alpha1 = 6.0 * 14.0 * alpha2;
  cfg.c = c;
  cfg.C = std::max(6.0 * c, 6.0);
  cfg.v = std::max(std::log(2.0 * cfg.C * b), 36.0 * b);
  cfg.n = n;
  cfg.derived_mode = true;
  const double arg = (alpha2 / (2.0 * cfg.v)) * std::log(static_cast<double>(n));
  cfg.j_max = arg > 0.0 ? static_cast<int>(std::floor(std::log(arg) / std::log(cfg.v))) : -1;
  return cfg;
}

PotentialConfig exploratory_constants(double v, double alpha2, std::size_t n) {
  if (!(v > 1.0)) throw ValidationError("exploratory_constants: v must be > 1");
  if (!(alpha2 > 0.0 && alpha2 < 1.0))
    throw ValidationError("exploratory_constants: alpha2 must be in (0,1)");
  if (n < 1) throw ValidationError("exploratory_constants: n must be >= 1");
  PotentialConfig cfg;
  cfg.alpha2 = alpha2;
  cfg.alpha1 = 6.0 * 14.0 * alpha2;
  cfg.c = 1.0;
  cfg.C = 6.0;
  cfg.v = v;
  cfg.n = n;
  cfg.derived_mode = false;
  const double arg = (alpha2 / (2.0 * v)) * std::log(static_cast<double>(n));
  cfg.j_max = arg > 0.0 ? static_cast<int>(std::floor(std::log(arg) / std::log(v))) : -1;
  return cfg;
}

double gamma_potential(const NormalizedLoads& y, double alpha) {
  if (!(alpha > 0.0)) throw ValidationError("gamma_potential: alpha must be > 0");
  double sum = 0.0;
  for (double yi : y.y) {
    const double e = alpha * yi;
    if (e > kExpCap || -e > kExpCap) return kInf;
    sum += std::exp(e) + std::exp(-e);
  }
  return sum;
}

namespace {
void check_j(int j, const PotentialConfig& cfg) {
  if (j < 0) throw ValidationError("layered potential: j must be >= 0");
  // derived mode enforces the schedule; exploratory configs may probe any j
  if (cfg.derived_mode && cfg.schedule_feasible() && j > cfg.j_max)
    throw ValidationError("layered potential: j exceeds j_max");
}
}  // namespace

double phi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg) {
  check_j(j, cfg);
  return clipped_exp_sum(y, cfg.alpha2 * std::pow(cfg.v, j), cfg.z(j), false);
}

double psi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg) {
  check_j(j, cfg);
  return clipped_exp_sum(y, cfg.alpha1 * std::pow(cfg.v, j), cfg.z(j), false);
}

double dot_phi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg) {
  check_j(j, cfg);
  return clipped_exp_sum(y, cfg.alpha2 * std::pow(cfg.v, j), cfg.z(j), true);
}

double dot_psi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg) {
  check_j(j, cfg);
  return clipped_exp_sum(y, cfg.alpha1 * std::pow(cfg.v, j), cfg.z(j), true);
}

}  // namespace balloc
