#include "balloc/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace balloc {

namespace {

constexpr double kEnumCap = 1e7;  // max n^d sample sequences to enumerate

void check_enum_cap(std::size_t n, std::uint32_t d) {
  if (std::pow(static_cast<double>(n), static_cast<double>(d)) > kEnumCap)
    throw ValidationError("state-space cap exceeded: n^d > 1e7");
}

/// Calls fn(seq, weight) for every sequence in [0,n)^d, where weight is the
/// product of per-index probabilities.
template <typename Fn>
void for_each_sequence(const std::vector<double>& probs, std::uint32_t d, Fn&& fn) {
  const std::size_t n = probs.size();
  std::vector<std::uint32_t> seq(d, 0);
  while (true) {
    double w = 1.0;
    for (std::uint32_t s : seq) w *= probs[s];
    fn(seq, w);
    std::uint32_t pos = d;
    while (pos > 0) {
      --pos;
      if (++seq[pos] < n) break;
      seq[pos] = 0;
      if (pos == 0) return;
    }
  }
}

/// One d-WeakMemory run over ranks (identity ordering): rank r is heavier
/// than rank r' iff r < r'. Returns per-rank ball counts in `counts`,
/// touching only `touched`.
void replay_run_on_ranks(std::span<const std::uint32_t> seq, std::vector<std::uint8_t>& counts,
                         std::vector<std::uint32_t>& touched) {
  std::uint32_t cache = seq[0];
  counts[cache] = 1;
  touched.push_back(cache);
  for (std::size_t s = 1; s < seq.size(); ++s) {
    const std::uint32_t i = seq[s];
    if (i > cache) cache = i;  // strictly lighter rank takes the cache
    if (counts[cache] == 0) touched.push_back(cache);
    ++counts[cache];
  }
}

}  // namespace

std::vector<double> RunProbMatrix::expected_balls() const {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t j = 1; j <= d; ++j) out[i] += static_cast<double>(j) * p[i][j];
  return out;
}

RunProbMatrix weak_memory_run_probs_closed(const SamplingDistribution& dist, std::uint32_t d) {
  if (d == 0) throw ValidationError("run probabilities: d must be >= 1");
  const std::size_t n = dist.n();
  RunProbMatrix rp;
  rp.n = n;
  rp.d = d;
  rp.p.assign(n, std::vector<double>(d + 1, 0.0));
  double f = 0.0;  // mass of ranks heavier than i
  for (std::size_t i = 0; i < n; ++i) {
    const double e = dist.prob(i);
    const double g = f + e;
    double row_sum = 0.0;
    for (std::uint32_t j = 1; j <= d; ++j) {
      // 0^0 = 1: with f = 0 and j = d the bracket degenerates to 1
      const double ftail = std::pow(f, static_cast<double>(d - j));
      const double val =
          e * std::pow(g, static_cast<double>(j - 1)) * (1.0 - e / (1.0 - f) * (1.0 - ftail));
      rp.p[i][j] = val;
      row_sum += val;
    }
    rp.p[i][0] = 1.0 - row_sum;
    f = g;
  }
  return rp;
}

RunProbMatrix exact_run_probs(const SamplingDistribution& dist, std::uint32_t d) {
  if (d == 0) throw ValidationError("run probabilities: d must be >= 1");
  const std::size_t n = dist.n();
  check_enum_cap(n, d);
  RunProbMatrix rp;
  rp.n = n;
  rp.d = d;
  rp.p.assign(n, std::vector<double>(d + 1, 0.0));
  std::vector<std::uint8_t> counts(n, 0);
  std::vector<std::uint32_t> touched;
  touched.reserve(d);
  for_each_sequence(dist.probs(), d, [&](const std::vector<std::uint32_t>& seq, double w) {
    replay_run_on_ranks(seq, counts, touched);
    for (std::uint32_t r : touched) {
      rp.p[r][counts[r]] += w;
      counts[r] = 0;
    }
    touched.clear();
  });
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::uint32_t j = 1; j <= d; ++j) row_sum += rp.p[i][j];
    rp.p[i][0] = 1.0 - row_sum;
  }
  return rp;
}

McRunProbs mc_run_probs(const SamplingDistribution& dist, std::uint32_t d, std::uint64_t trials,
                        Rng& rng) {
  if (d == 0) throw ValidationError("run probabilities: d must be >= 1");
  if (trials == 0) throw ValidationError("mc_run_probs: trials must be >= 1");
  const std::size_t n = dist.n();
  McRunProbs out;
  out.trials = trials;
  out.probs.n = n;
  out.probs.d = d;
  std::vector<std::vector<std::uint64_t>> hits(n, std::vector<std::uint64_t>(d + 1, 0));
  std::vector<std::uint8_t> counts(n, 0);
  std::vector<std::uint32_t> touched;
  std::vector<std::uint32_t> seq(d);
  for (std::uint64_t t = 0; t < trials; ++t) {
    for (std::uint32_t s = 0; s < d; ++s) seq[s] = dist.sample(rng);
    replay_run_on_ranks(seq, counts, touched);
    for (std::size_t i = 0; i < n; ++i) ++hits[i][counts[i]];
    for (std::uint32_t r : touched) counts[r] = 0;
    touched.clear();
  }
  out.probs.p.assign(n, std::vector<double>(d + 1, 0.0));
  out.stderrs.assign(n, std::vector<double>(d + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j <= d; ++j) {
      const double p = static_cast<double>(hits[i][j]) / static_cast<double>(trials);
      out.probs.p[i][j] = p;
      out.stderrs[i][j] = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
    }
  }
  return out;
}

AllocationVector proxy_allocation_vector(const RunProbMatrix& rp) {
  AllocationVector v;
  v.p = rp.expected_balls();
  for (double& x : v.p) x /= static_cast<double>(rp.d);
  return v;
}

AllocationVector twochoice_allocation_vector(std::size_t n) {
  if (n == 0) throw ValidationError("twochoice_allocation_vector: n must be >= 1");
  AllocationVector v;
  v.p.resize(n);
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  for (std::size_t i = 1; i <= n; ++i) v.p[i - 1] = (2.0 * static_cast<double>(i) - 1.0) / n2;
  return v;
}

C1Result c1_check(const AllocationVector& p, double delta, double eps) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("c1_check: delta must be in (0,1)");
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("c1_check: eps must be in (0,1)");
  const std::size_t n = p.p.size();
  if (n == 0) throw ValidationError("c1_check: empty vector");
  double sum = 0.0;
  for (double x : p.p) {
    if (x < -1e-12) throw ValidationError("c1_check: negative entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("c1_check: vector must sum to 1");

  constexpr double kSlack = 1e-12;
  C1Result res;
  res.delta = delta;
  res.eps = eps;
  const auto k_delta =
      static_cast<std::size_t>(std::floor(delta * static_cast<double>(n) + kSlack));
  const double nn = static_cast<double>(n);

  double prefix = 0.0;
  std::vector<double> prefix_sums(n);
  for (std::size_t k = 1; k <= n; ++k) {
    prefix += p.p[k - 1];
    prefix_sums[k - 1] = prefix;
  }
  for (std::size_t k = 1; k <= k_delta; ++k) {
    if (prefix_sums[k - 1] > (1.0 - eps) * static_cast<double>(k) / nn + kSlack) {
      res.pass = false;
      res.first_violation_k = static_cast<int>(k);
      res.violated_side = "prefix";
      return res;
    }
  }
  const double suffix_factor = 1.0 + eps * delta / (1.0 - delta);
  for (std::size_t k = k_delta + 1; k <= n; ++k) {
    const double suffix = 1.0 - (k >= 2 ? prefix_sums[k - 2] : 0.0);
    if (suffix < suffix_factor * static_cast<double>(n - k + 1) / nn - kSlack) {
      res.pass = false;
      res.first_violation_k = static_cast<int>(k);
      res.violated_side = "suffix";
      return res;
    }
  }
  res.pass = true;
  return res;
}

std::uint32_t min_d_for_c1(double a, double b, double eps) {
  if (!(b > 1.0))
    throw ValidationError("min_d_for_c1: inapplicable for b = 1 (division by zero)");
  if (!(a > 1.0)) throw ValidationError("min_d_for_c1: requires a > 1");
  if (!(eps >= 0.0 && eps < 1.0)) throw ValidationError("min_d_for_c1: eps must be in [0,1)");
  const double ab1 = a * b - 1.0;
  const double val = 2.0 * b * ab1 * ab1 / ((b - 1.0) * (b - 1.0) * (1.0 - eps));
  const double d = std::ceil(val - 1e-9);
  return std::max<std::uint32_t>(2, static_cast<std::uint32_t>(d));
}

bool step_majorizes(double a, double b, std::size_t n, std::uint32_t d,
                    const SamplingDistribution& mu, std::size_t* first_k) {
  if (!is_ab_biased(mu, a, b))
    throw ValidationError("step_majorizes: mu is not (a,b)-biased");
  const auto nu = make_step(a, b, n);
  const auto ev = exact_run_probs(nu, d).expected_balls();
  const auto em = exact_run_probs(mu, d).expected_balls();
  return majorizes_prefix(ev, em, first_k);
}

MajorizationReport majorization_check_step_vs_biased(double a, double b, std::size_t n,
                                                     std::uint32_t d, std::size_t num_random,
                                                     Rng& rng) {
  MajorizationReport rep;
  const auto nu = make_step(a, b, n);
  const auto ev = exact_run_probs(nu, d).expected_balls();
  for (std::size_t r = 0; r < num_random; ++r) {
    const auto mu = random_biased(a, b, n, rng);
    const auto em = exact_run_probs(mu, d).expected_balls();
    std::size_t k = 0;
    if (!majorizes_prefix(ev, em, &k)) {
      rep.all_majorized = false;
      rep.counterexamples.push_back({r, k});
    }
    ++rep.checked;
  }
  return rep;
}

namespace {

double drop_c_min(double gamma_before, double expected_after, double alpha, std::size_t n) {
  // smallest c >= 1 with expected_after <= gamma*(1 - alpha/(cn)) + c*alpha,
  // i.e. the positive root of alpha c^2 + (gamma - E) c - alpha*gamma/n = 0
  const double gm = gamma_before - expected_after;
  const double root =
      (-gm + std::sqrt(gm * gm + 4.0 * alpha * alpha * gamma_before / static_cast<double>(n))) /
      (2.0 * alpha);
  return std::max(1.0, root);
}

void check_drop_process(ProcessKind kind) {
  if (kind != ProcessKind::Memory && kind != ProcessKind::WeakMemory &&
      kind != ProcessKind::ResetMemory)
    throw ValidationError("verify_drop: process must be memory, weak-memory or reset-memory");
}

double gamma_after_sequence(const DropState& st, ProcessKind kind,
                            std::span<const std::uint32_t> seq, std::uint32_t d, double alpha) {
  auto ps = ProcessState<std::uint64_t>::from_load_vector(
      st.lv, kind == ProcessKind::Memory ? st.cache : std::nullopt);
  for (std::uint32_t s = 0; s < d; ++s) {
    switch (kind) {
      case ProcessKind::Memory:
        ps.memory_step(seq[s], 1);
        break;
      case ProcessKind::WeakMemory:
        ps.weak_memory_step(seq[s], 1, d);
        break;
      case ProcessKind::ResetMemory:
        ps.reset_memory_step(seq[s], 1, d);
        break;
      default:
        break;
    }
  }
  return gamma_potential(normalize(ps.load_vector()), alpha);
}

void finalize_drop_report(DropReport& rep, double gap_threshold) {
  rep.c_min = 1.0;
  for (const auto& s : rep.states) {
    rep.c_min = std::max(rep.c_min, s.c_min);
    if (s.gap >= gap_threshold) {
      ++rep.num_above_threshold;
      if (s.decreased) ++rep.num_decreased_above_threshold;
    }
  }
  rep.all_decreased_above_threshold =
      rep.num_decreased_above_threshold == rep.num_above_threshold;
}

}  // namespace

DropReport verify_drop_exact(ProcessKind kind, const SamplingDistribution& dist, double alpha,
                             std::uint32_t d, std::span<const DropState> states,
                             double gap_threshold) {
  check_drop_process(kind);
  if (d == 0) throw ValidationError("verify_drop: d must be >= 1");
  check_enum_cap(dist.n(), d);
  DropReport rep;
  for (const auto& st : states) {
    st.lv.validate();
    if (st.lv.n() != dist.n()) throw ValidationError("verify_drop: state size != dist size");
    DropStateReport sr;
    sr.gap = gap(st.lv);
    sr.gamma_before = gamma_potential(normalize(st.lv), alpha);
    double expectation = 0.0;
    for_each_sequence(dist.probs(), d, [&](const std::vector<std::uint32_t>& seq, double w) {
      expectation += w * gamma_after_sequence(st, kind, seq, d, alpha);
    });
    sr.expected_after = expectation;
    sr.decreased = expectation < sr.gamma_before;
    sr.c_min = drop_c_min(sr.gamma_before, expectation, alpha, dist.n());
    rep.states.push_back(sr);
  }
  finalize_drop_report(rep, gap_threshold);
  return rep;
}

DropReport verify_drop_mc(ProcessKind kind, const SamplingDistribution& dist, double alpha,
                          std::uint32_t d, std::span<const DropState> states,
                          double gap_threshold, std::uint64_t trials, Rng& rng) {
  check_drop_process(kind);
  if (d == 0) throw ValidationError("verify_drop: d must be >= 1");
  if (trials < 10000) throw ValidationError("verify_drop_mc: trials must be >= 1e4");
  DropReport rep;
  std::vector<std::uint32_t> seq(d);
  for (const auto& st : states) {
    st.lv.validate();
    if (st.lv.n() != dist.n()) throw ValidationError("verify_drop: state size != dist size");
    DropStateReport sr;
    sr.gap = gap(st.lv);
    sr.gamma_before = gamma_potential(normalize(st.lv), alpha);
    double mean = 0.0, m2 = 0.0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      for (std::uint32_t s = 0; s < d; ++s) seq[s] = dist.sample(rng);
      const double g = gamma_after_sequence(st, kind, seq, d, alpha);
      const double delta = g - mean;
      mean += delta / static_cast<double>(t + 1);
      m2 += delta * (g - mean);
    }
    sr.expected_after = mean;
    sr.stderr_after = std::sqrt(m2 / static_cast<double>(trials - 1) /
                                static_cast<double>(trials));
    sr.decreased = mean + 4.0 * sr.stderr_after < sr.gamma_before;
    if (mean - 4.0 * sr.stderr_after > sr.gamma_before) ++rep.mc_contradictions;
    sr.c_min = drop_c_min(sr.gamma_before, mean, alpha, dist.n());
    rep.states.push_back(sr);
  }
  finalize_drop_report(rep, gap_threshold);
  return rep;
}

std::vector<DropState> random_drop_states(std::size_t n, std::size_t count,
                                          std::uint64_t gap_min, Rng& rng) {
  if (n < 2) throw ValidationError("random_drop_states: n must be >= 2");
  std::vector<DropState> out;
  out.reserve(count);
  while (out.size() < count) {
    LoadVectorU lv;
    lv.loads.resize(n);
    for (auto& x : lv.loads) x = rng.next_below(gap_min + 1);
    lv.loads[rng.next_below(n)] = 2 * gap_min;
    lv.total_weight = 0;
    for (auto x : lv.loads) lv.total_weight += x;
    if (gap(lv) < static_cast<double>(gap_min)) continue;
    std::uint32_t cache = 0;
    for (std::uint32_t i = 1; i < n; ++i)
      if (lv.loads[i] < lv.loads[cache]) cache = i;
    out.push_back({std::move(lv), cache});
  }
  return out;
}

bool FoldedSegmentation::valid_partition(std::uint64_t first_t, std::uint64_t last_t) const {
  if (rounds.empty()) return false;
  if (rounds.front().begin != first_t) return false;
  if (rounds.back().end != last_t + 1) return false;
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    const auto& round = rounds[r];
    if (round.end <= round.begin) return false;
    if (r > 0 && round.begin != rounds[r - 1].end) return false;
    if (round.case_a) {
      if (round.end != round.begin + 1 || !round.phases.empty()) return false;
      continue;
    }
    if (round.phases.empty()) return false;
    std::uint64_t t = round.begin;
    for (std::size_t ph = 0; ph < round.phases.size(); ++ph) {
      const auto& phase = round.phases[ph];
      if (phase.begin != t || phase.end <= phase.begin) return false;
      const std::uint64_t len = phase.end - phase.begin;
      const bool is_last = ph + 1 == round.phases.size();
      if (len != substeps_per_phase &&
          !(is_last && round.termination == Termination::TraceEnd && len < substeps_per_phase))
        return false;
      t = phase.end;
    }
    if (t != round.end) return false;
    if (round.phases.size() > k_j) return false;
  }
  return true;
}

FoldedSegmentation segment_folded(const Trace& trace, int j, const PotentialConfig& cfg) {
  if (j < 1) throw ValidationError("segment_folded: j must be >= 1");
  if (trace.steps.empty())
    throw ValidationError("segment_folded: trace lacks full per-step data");
  for (const auto& s : trace.steps)
    if (s.sampled.size() != 1)
      throw ValidationError("segment_folded: trace must come from a single-sample process");

  FoldedSegmentation seg;
  seg.substeps_per_phase =
      static_cast<std::uint64_t>(std::ceil(cfg.v / cfg.alpha2 - 1e-9));
  seg.k_j = cfg.k(j);
  const double z_prev = cfg.z(j - 1);
  seg.light_threshold = z_prev + 2.0 * cfg.v / cfg.alpha2;
  seg.alloc_bound = z_prev + 4.0 * cfg.v / cfg.alpha2;
  constexpr double kTol = 1e-9;

  // replay the allocations, evaluating normalized loads just before each step
  std::vector<double> loads(trace.n, 0.0);
  double total = 0.0;
  const double n = static_cast<double>(trace.n);
  auto y_of = [&](std::uint32_t bin) { return loads[bin] - total / n; };
  auto apply = [&](const StepRecord& s) {
    loads[s.alloc] += s.weight;
    total += s.weight;
  };

  std::size_t i = 0;
  const auto& steps = trace.steps;
  while (i < steps.size()) {
    FoldedSegmentation::Round round;
    round.begin = steps[i].t;
    const double y_first_sample = y_of(steps[i].sampled[0]);
    if (y_first_sample >= seg.light_threshold) {
      // Case A: a single step; the ball may not go to a heavier bin
      round.case_a = true;
      round.termination = FoldedSegmentation::Termination::CaseA;
      if (y_of(steps[i].alloc) > y_first_sample + kTol)
        seg.violations.push_back({steps[i].t, y_of(steps[i].alloc), y_first_sample});
      apply(steps[i]);
      ++i;
      round.end = round.begin + 1;
      seg.rounds.push_back(std::move(round));
      continue;
    }
    // Case B: phases of fixed length until a phase without a light sample
    // (Condition 1) or k_j phases (Condition 2)
    round.termination = FoldedSegmentation::Termination::TraceEnd;
    while (true) {
      FoldedSegmentation::Phase phase;
      phase.begin = steps[i].t;
      std::uint64_t done = 0;
      while (done < seg.substeps_per_phase && i < steps.size()) {
        const auto& s = steps[i];
        if (y_of(s.sampled[0]) < seg.light_threshold) phase.sampled_light = true;
        const double y_alloc = y_of(s.alloc);
        if (y_alloc > seg.alloc_bound + kTol)
          seg.violations.push_back({s.t, y_alloc, seg.alloc_bound});
        apply(s);
        ++i;
        ++done;
      }
      phase.end = phase.begin + done;
      round.phases.push_back(phase);
      if (done < seg.substeps_per_phase) break;  // trace ended mid-phase
      if (!phase.sampled_light) {
        round.termination = FoldedSegmentation::Termination::Condition1;
        break;
      }
      if (round.phases.size() >= seg.k_j) {
        round.termination = FoldedSegmentation::Termination::Condition2;
        break;
      }
      if (i >= steps.size()) break;
    }
    round.end = round.phases.back().end;
    seg.rounds.push_back(std::move(round));
  }
  return seg;
}

}  // namespace balloc
