#pragma once

#include <cstdint>
#include <string>

#include "balloc/core.hpp"

namespace balloc {

/// Smoothing parameters and layered-potential constants. Fields follow the
/// schedule z_j = (5v/alpha2) j, v = max{log(2Cb), 36b}, C = max{6c, 6},
/// j_max = floor(log_v((alpha2/(2v)) log n)), alpha1 = 6*14*alpha2, with
/// natural logs throughout.
///
/// Two modes: "derived" computes v from (b, c) and yields astronomically steep
/// potentials (formula validation only); "exploratory" takes small v, alpha2
/// directly for empirical drift measurements. The mode is recorded in every
/// output that uses the config.
struct PotentialConfig {
  double alpha2 = 0.1;
  double alpha1 = 8.4;  // always 84 * alpha2
  double v = 2.0;
  double c = 1.0;  // drift constant; derived mode computes C from it
  double C = 6.0;
  int j_max = -1;  // < 1 means the schedule is infeasible at this n
  std::size_t n = 0;
  bool derived_mode = false;

  double z(int j) const { return (5.0 * v / alpha2) * j; }

  /// Phases per Case-B round: min(e^{v^{j+1}} ln^3 n, floor(n^{1/7})), >= 1.
  std::uint64_t k(int j) const;

  bool schedule_feasible() const { return j_max >= 1; }
  std::string mode_name() const { return derived_mode ? "derived" : "exploratory"; }
};

PotentialConfig layered_constants(double a, double b, double c, double alpha2, std::size_t n);
PotentialConfig exploratory_constants(double v, double alpha2, std::size_t n);

/// Hyperbolic cosine potential: sum_i e^{alpha y_i} + e^{-alpha y_i}.
/// Always >= 2n. Exponents above 700 return the +infinity sentinel so a
/// misconfigured alpha is visible instead of silently saturating.
double gamma_potential(const NormalizedLoads& y, double alpha);

/// Layered potentials: sum_i e^{alpha * v^j * (y_i - z_j)^+} with
/// alpha = alpha2 for phi and alpha = alpha1 for psi. Always >= n.
double phi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg);
double psi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg);

/// Partial variants restricted to bins with y_i >= z_j (boundary included);
/// may be 0 and satisfy dot <= full <= dot + n.
double dot_phi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg);
double dot_psi_j(const NormalizedLoads& y, int j, const PotentialConfig& cfg);

}  // namespace balloc
