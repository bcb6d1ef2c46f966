#include "balloc/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace balloc {

namespace {

// Walker/Vose alias table. Iteration order is fixed, so construction is
// deterministic for a given probability vector.
void build_alias_table(const std::vector<double>& probs, std::vector<double>& accept,
                       std::vector<std::uint32_t>& alias) {
  const std::size_t n = probs.size();
  accept.assign(n, 1.0);
  alias.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  for (std::uint32_t i = 0; i < n; ++i) {
    scaled[i] = probs[i] * static_cast<double>(n);
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    small.pop_back();
    const std::uint32_t l = large.back();
    accept[s] = scaled[s];
    alias[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (std::uint32_t i : large) {
    accept[i] = 1.0;
    alias[i] = i;
  }
  for (std::uint32_t i : small) {  // numerical leftovers
    accept[i] = 1.0;
    alias[i] = i;
  }
}

void renormalize(std::vector<double>& probs) {
  const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= sum;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

void SamplingDistribution::build_alias() { build_alias_table(probs_, accept_, alias_); }

SamplingDistribution make_uniform(std::size_t n) {
  if (n == 0) throw ValidationError("make_uniform: n must be >= 1");
  SamplingDistribution d;
  d.probs_.assign(n, 1.0 / static_cast<double>(n));
  d.a_bias_ = 1.0;
  d.b_bias_ = 1.0;
  d.build_alias();
  return d;
}

SamplingDistribution make_biased(std::vector<double> probs) {
  if (probs.empty()) throw ValidationError("make_biased: empty probability vector");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) throw ValidationError("make_biased: entries must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("make_biased: probabilities must sum to 1 within 1e-9");
  SamplingDistribution d;
  d.probs_ = std::move(probs);
  renormalize(d.probs_);
  const auto [mn, mx] = std::minmax_element(d.probs_.begin(), d.probs_.end());
  const auto n = static_cast<double>(d.probs_.size());
  d.a_bias_ = 1.0 / (n * *mn);
  d.b_bias_ = n * *mx;
  d.build_alias();
  return d;
}

std::size_t step_heavy_count(double a, double b, std::size_t n) {
  const double m_real = static_cast<double>(n) * (a - 1.0) / (a * b - 1.0);
  const double m_round = std::round(m_real);
  if (std::abs(m_real - m_round) > 1e-9)
    throw ValidationError("make_step: M = n(a-1)/(ab-1) is not integral");
  if (m_round < 1.0 || m_round > static_cast<double>(n))
    throw ValidationError("make_step: M out of range [1, n]");
  return static_cast<std::size_t>(m_round);
}

SamplingDistribution make_step(double a, double b, std::size_t n) {
  if (n == 0) throw ValidationError("make_step: n must be >= 1");
  if (!(a > 1.0) || !(b > 1.0)) throw ValidationError("make_step: requires a > 1 and b > 1");
  const std::size_t heavy = step_heavy_count(a, b, n);
  SamplingDistribution d;
  d.probs_.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    d.probs_[i] = i < heavy ? b / static_cast<double>(n)
                            : 1.0 / (a * static_cast<double>(n));
  renormalize(d.probs_);
  d.a_bias_ = a;
  d.b_bias_ = b;
  d.build_alias();
  return d;
}

std::pair<double, double> snap_step_params(double a, double b, std::size_t n) {
  if (!(a > 1.0) || !(b > 1.0)) throw ValidationError("snap_step_params: requires a, b > 1");
  const double nn = static_cast<double>(n);
  const double m_real = nn * (a - 1.0) / (a * b - 1.0);
  // keep b, solve n(a'-1)/(a'b-1) = M for the nearest workable integer M
  for (double off = 0.0; off <= nn; off += 1.0) {
    for (double m : {std::round(m_real) - off, std::round(m_real) + off}) {
      if (m < 1.0 || m >= nn / b) continue;  // need n - Mb > 0
      const double a2 = (nn - m) / (nn - m * b);
      if (a2 > 1.0 + 1e-12) return {a2, b};
    }
  }
  throw ValidationError("snap_step_params: no integral M reachable");
}

SamplingDistribution random_biased(double a, double b, std::size_t n, Rng& rng) {
  if (!(a >= 1.0) || !(b >= 1.0)) throw ValidationError("random_biased: requires a, b >= 1");
  const double lo = 1.0 / (a * static_cast<double>(n));
  const double hi = b / static_cast<double>(n);
  std::vector<double> u(n);
  for (double& x : u) x = lo + (hi - lo) * rng.next_double();
  const double deficit = 1.0 - std::accumulate(u.begin(), u.end(), 0.0);
  if (deficit > 0.0) {
    double head = 0.0;
    for (double x : u) head += hi - x;
    for (double& x : u) x += deficit * (hi - x) / head;
  } else if (deficit < 0.0) {
    double room = 0.0;
    for (double x : u) room += x - lo;
    for (double& x : u) x += deficit * (x - lo) / room;
  }
  for (double& x : u) x = std::clamp(x, lo, hi);
  return make_biased(std::move(u));
}

bool is_ab_biased(const SamplingDistribution& dist, double a, double b, double tol) {
  const auto n = static_cast<double>(dist.n());
  for (double p : dist.probs()) {
    if (p < 1.0 / (a * n) - tol || p > b / n + tol) return false;
  }
  return true;
}

WeightDistribution WeightDistribution::unit() {
  WeightDistribution w;
  w.kind_ = Kind::Unit;
  w.mgf_lambda_ = 1.0;
  return w;
}

WeightDistribution WeightDistribution::exponential() {
  WeightDistribution w;
  w.kind_ = Kind::Exponential;
  w.mgf_lambda_ = 0.5;  // MGF of Exp(1) is finite for lambda < 1
  return w;
}

WeightDistribution WeightDistribution::discrete(std::vector<double> values,
                                                std::vector<double> probs) {
  if (values.size() != probs.size() || values.empty())
    throw ValidationError("discrete weights: values/probs size mismatch");
  double sum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0.0) throw ValidationError("discrete weights: negative value");
    if (!(probs[i] > 0.0)) throw ValidationError("discrete weights: probs must be positive");
    sum += probs[i];
    mean += values[i] * probs[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("discrete weights: probs must sum to 1 within 1e-9");
  if (std::abs(mean / sum - 1.0) > 1e-9)
    throw ValidationError("discrete weights: mean must equal 1");
  WeightDistribution w;
  w.kind_ = Kind::Discrete;
  w.mgf_lambda_ = 1.0;  // bounded support
  w.values_ = std::move(values);
  w.probs_ = std::move(probs);
  renormalize(w.probs_);
  build_alias_table(w.probs_, w.accept_, w.alias_);
  return w;
}

double WeightDistribution::mean() const {
  switch (kind_) {
    case Kind::Unit:
    case Kind::Exponential:
      return 1.0;
    case Kind::Discrete: {
      double m = 0.0;
      for (std::size_t i = 0; i < values_.size(); ++i) m += values_[i] * probs_[i];
      return m;
    }
  }
  return 1.0;
}

double WeightDistribution::sample(Rng& rng) const {
  switch (kind_) {
    case Kind::Unit:
      return 1.0;
    case Kind::Exponential:
      return -std::log1p(-rng.next_double());
    case Kind::Discrete: {
      const auto k = static_cast<std::uint32_t>(rng.next_below(values_.size()));
      return values_[rng.next_double() < accept_[k] ? k : alias_[k]];
    }
  }
  return 1.0;
}

std::string WeightDistribution::spec_string() const {
  switch (kind_) {
    case Kind::Unit:
      return "unit";
    case Kind::Exponential:
      return "exp";
    case Kind::Discrete:
      return "discrete";
  }
  return "unit";
}

SamplingDistribution parse_dist_spec(const std::string& spec, std::size_t n) {
  if (spec == "uniform") return make_uniform(n);
  if (spec.rfind("step:", 0) == 0) {
    double a = 0.0, b = 0.0;
    if (std::sscanf(spec.c_str(), "step:a=%lf,b=%lf", &a, &b) != 2)
      throw ValidationError("bad step spec, expected step:a=<f>,b=<f>: " + spec);
    return make_step(a, b, n);
  }
  if (spec.rfind("biased:@", 0) == 0) {
    const auto j = load_json_file(spec.substr(8));
    if (!j.is_array()) throw ValidationError("biased file must hold a JSON array");
    std::vector<double> probs = j.get<std::vector<double>>();
    if (n != 0 && probs.size() != n)
      throw ValidationError("biased file length does not match n");
    return make_biased(std::move(probs));
  }
  throw ValidationError("unknown distribution spec: " + spec);
}

std::optional<WeightDistribution> parse_weight_spec(const std::string& spec) {
  if (spec.empty()) return std::nullopt;
  if (spec == "unit") return WeightDistribution::unit();
  if (spec == "exp" || spec == "exponential") return WeightDistribution::exponential();
  if (spec.rfind("discrete:@", 0) == 0) {
    const auto j = load_json_file(spec.substr(10));
    if (!j.contains("values") || !j.contains("probs"))
      throw ValidationError("discrete weight file needs {\"values\":[],\"probs\":[]}");
    return WeightDistribution::discrete(j["values"].get<std::vector<double>>(),
                                        j["probs"].get<std::vector<double>>());
  }
  throw ValidationError("unknown weight spec: " + spec);
}

}  // namespace balloc
