#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "balloc/core.hpp"
#include "balloc/rng.hpp"

namespace balloc {

/// A probability vector over bins together with its (a,b)-bias metadata:
/// a_bias = 1/(n * min s_i), b_bias = n * max s_i. Sampling uses a Walker
/// alias table built once at construction; distributions are immutable and
/// safe to share across trials.
class SamplingDistribution {
 public:
  SamplingDistribution() = default;  // empty; rejected by consumers via n() == 0

  std::size_t n() const { return probs_.size(); }
  const std::vector<double>& probs() const { return probs_; }
  double prob(std::size_t i) const { return probs_[i]; }
  double a_bias() const { return a_bias_; }
  double b_bias() const { return b_bias_; }

  std::uint32_t sample(Rng& rng) const {
    const auto k = static_cast<std::uint32_t>(rng.next_below(probs_.size()));
    return rng.next_double() < accept_[k] ? k : alias_[k];
  }

  friend SamplingDistribution make_uniform(std::size_t n);
  friend SamplingDistribution make_biased(std::vector<double> probs);
  friend SamplingDistribution make_step(double a, double b, std::size_t n);

 private:
  void build_alias();

  std::vector<double> probs_;
  double a_bias_ = 1.0;
  double b_bias_ = 1.0;
  std::vector<double> accept_;
  std::vector<std::uint32_t> alias_;
};

SamplingDistribution make_uniform(std::size_t n);

/// Entries must be positive and sum to 1 within 1e-9; stored renormalized.
SamplingDistribution make_biased(std::vector<double> probs);

/// The (a,b)-step distribution: M = n(a-1)/(ab-1) bins at mass b/n, the rest
/// at 1/(an). M must be integral within 1e-9 and in [1, n]; we reject rather
/// than round (see snap_step_params for an opt-in repair).
SamplingDistribution make_step(double a, double b, std::size_t n);

std::size_t step_heavy_count(double a, double b, std::size_t n);

/// Opt-in helper: keeps b and moves a to the closest value making
/// M = n(a-1)/(ab-1) integral. Returns the adjusted (a, b).
std::pair<double, double> snap_step_params(double a, double b, std::size_t n);

/// A uniformly-ish random (a,b)-biased distribution: iid draws in
/// [1/(an), b/n], then the mass defect is spread proportionally to the
/// remaining head/foot room, which keeps every entry inside the band.
SamplingDistribution random_biased(double a, double b, std::size_t n, Rng& rng);

bool is_ab_biased(const SamplingDistribution& dist, double a, double b, double tol = 1e-9);

/// Ball-weight distribution with E[W] = 1 and a finite MGF at mgf_lambda.
class WeightDistribution {
 public:
  enum class Kind { Unit, Exponential, Discrete };

  static WeightDistribution unit();
  static WeightDistribution exponential();
  static WeightDistribution discrete(std::vector<double> values, std::vector<double> probs);

  Kind kind() const { return kind_; }
  double mgf_lambda() const { return mgf_lambda_; }
  double mean() const;
  double sample(Rng& rng) const;
  std::string spec_string() const;

 private:
  Kind kind_ = Kind::Unit;
  double mgf_lambda_ = 1.0;
  std::vector<double> values_;
  std::vector<double> probs_;
  std::vector<double> accept_;
  std::vector<std::uint32_t> alias_;
};

/// CLI spec strings: "uniform", "step:a=2,b=2", "biased:@path.json"
/// (JSON array of probabilities; its length must match n when n > 0).
SamplingDistribution parse_dist_spec(const std::string& spec, std::size_t n);

/// Weight spec strings: "unit", "exp", "discrete:@path.json"
/// (JSON object {"values": [...], "probs": [...]}). Empty string = no weights.
std::optional<WeightDistribution> parse_weight_spec(const std::string& spec);

}  // namespace balloc
