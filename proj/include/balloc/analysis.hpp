#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "balloc/core.hpp"
#include "balloc/potentials.hpp"
#include "balloc/processes.hpp"
#include "balloc/rng.hpp"
#include "balloc/sampling.hpp"

namespace balloc {

/// p[i][j]: probability that the rank-(i+1) bin (under a fixed ordering;
/// rank 0 = heaviest, with sampling mass probs[i]) receives j balls in one
/// d-step run of d-WeakMemory. Rows sum to 1 and expected balls sum to d.
struct RunProbMatrix {
  std::size_t n = 0;
  std::uint32_t d = 0;
  std::vector<std::vector<double>> p;  // [n][d+1]

  /// E[balls to rank i] = sum_j j * p[i][j].
  std::vector<double> expected_balls() const;
};

/// Closed form for one run of d-WeakMemory with per-rank masses
/// e_i = probs[i], f_i = sum_{k<i} e_k, g_i = f_i + e_i:
///   p_{i,j} = e_i g_i^{j-1} [1 - e_i/(1-f_i) (1 - f_i^{d-j})],  j >= 1,
/// with 0^0 = 1 so the f_i = 0, j = d case matches the hand trace.
/// Row j = 0 entries are the complements.
RunProbMatrix weak_memory_run_probs_closed(const SamplingDistribution& dist, std::uint32_t d);

/// Brute-force oracle: enumerates all n^d sample sequences, replays the run
/// rules exactly and weighs by the sampling probabilities. n^d <= 1e7.
RunProbMatrix exact_run_probs(const SamplingDistribution& dist, std::uint32_t d);

struct McRunProbs {
  RunProbMatrix probs;
  std::vector<std::vector<double>> stderrs;  // per-entry standard errors
  std::uint64_t trials = 0;
};

McRunProbs mc_run_probs(const SamplingDistribution& dist, std::uint32_t d,
                        std::uint64_t trials, Rng& rng);

/// Probability (or proxy) allocation vector over ranks; sums to 1.
struct AllocationVector {
  std::vector<double> p;
};

/// p_i = (1/d) sum_j j * p[i][j] -- the per-run expected ball share.
AllocationVector proxy_allocation_vector(const RunProbMatrix& rp);

/// TwoChoice on uniform sampling: p_i = (2i - 1) / n^2.
AllocationVector twochoice_allocation_vector(std::size_t n);

struct C1Result {
  bool pass = false;
  int first_violation_k = 0;          // 1-based; 0 when pass
  std::string violated_side;          // "prefix" or "suffix"
  double delta = 0.0;
  double eps = 0.0;
};

/// Condition C1: prefix sums <= (1-eps) k/n for k <= delta*n, and suffix
/// sums >= (1 + eps*delta/(1-delta)) (n-k+1)/n above, with 1e-12 slack.
C1Result c1_check(const AllocationVector& p, double delta, double eps);

/// Smallest integer d >= 2 with d >= 2b(ab-1)^2 / ((b-1)^2 (1-eps)).
/// b = 1 is a pole and is rejected.
std::uint32_t min_d_for_c1(double a, double b, double eps);

struct MajorizationReport {
  std::size_t checked = 0;
  bool all_majorized = true;
  struct Counterexample {
    std::size_t dist_index;
    std::size_t first_k;  // 0-based prefix index that failed
  };
  std::vector<Counterexample> counterexamples;
};

/// Verifies that the (a,b)-step distribution's expected-ball vector
/// (rank-order prefix sums) majorizes that of sampled (a,b)-biased
/// distributions, using the exact oracle on both sides.
MajorizationReport majorization_check_step_vs_biased(double a, double b, std::size_t n,
                                                     std::uint32_t d, std::size_t num_random,
                                                     Rng& rng);

/// Same comparison against one explicit distribution; mu must be (a,b)-biased.
bool step_majorizes(double a, double b, std::size_t n, std::uint32_t d,
                    const SamplingDistribution& mu, std::size_t* first_k = nullptr);

struct DropState {
  LoadVectorU lv;
  std::optional<std::uint32_t> cache;  // used by Memory; Weak/Reset start a fresh run
};

struct DropStateReport {
  double gap = 0.0;
  double gamma_before = 0.0;
  double expected_after = 0.0;
  double stderr_after = 0.0;  // 0 for the exact route
  bool decreased = false;     // expected_after < gamma_before (strict)
  double c_min = 1.0;         // smallest c >= 1 with E <= Gamma(1 - a/(cn)) + ca
};

struct DropReport {
  std::vector<DropStateReport> states;
  double c_min = 1.0;
  std::size_t num_above_threshold = 0;
  std::size_t num_decreased_above_threshold = 0;
  bool all_decreased_above_threshold = true;
  std::size_t mc_contradictions = 0;  // states whose 4-sigma interval excludes a drop
};

/// Exact conditional expectation E[Gamma^{t+d} | state] by enumerating all
/// n^d sample sequences of the given memory-family process.
DropReport verify_drop_exact(ProcessKind kind, const SamplingDistribution& dist, double alpha,
                             std::uint32_t d, std::span<const DropState> states,
                             double gap_threshold);

/// Monte-Carlo estimate of the same expectation with per-state standard
/// errors. trials >= 1e4.
DropReport verify_drop_mc(ProcessKind kind, const SamplingDistribution& dist, double alpha,
                          std::uint32_t d, std::span<const DropState> states,
                          double gap_threshold, std::uint64_t trials, Rng& rng);

/// Random integer load states with gap >= gap_min: iid loads in
/// [0, gap_min] with one bin raised to 2*gap_min, rejection-checked.
/// The cache is set to a minimum-load bin (lowest id on ties).
std::vector<DropState> random_drop_states(std::size_t n, std::size_t count,
                                          std::uint64_t gap_min, Rng& rng);

/// Round/phase segmentation of a full single-sample trace.
struct FoldedSegmentation {
  enum class Termination { CaseA, Condition1, Condition2, TraceEnd };

  struct Phase {
    std::uint64_t begin = 0;  // 1-based step of the first substep
    std::uint64_t end = 0;    // exclusive
    bool sampled_light = false;
  };
  struct Round {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;  // exclusive
    bool case_a = false;
    Termination termination = Termination::TraceEnd;
    std::vector<Phase> phases;
  };
  struct Violation {
    std::uint64_t t = 0;
    double y_alloc = 0.0;
    double bound = 0.0;
  };

  std::vector<Round> rounds;
  std::vector<Violation> violations;
  std::uint64_t substeps_per_phase = 0;
  std::uint64_t k_j = 0;
  double light_threshold = 0.0;  // z_{j-1} + 2v/alpha2
  double alloc_bound = 0.0;      // z_{j-1} + 4v/alpha2

  bool valid_partition(std::uint64_t first_t, std::uint64_t last_t) const;
};

/// Partitions the trace's steps into folded-process rounds for layer j:
/// Case-A single-step rounds when the round's first sample is heavy
/// (y >= z_{j-1} + 2v/alpha2), otherwise Case-B phase sequences of
/// ceil(v/alpha2) substeps ended by Condition 1 (no light sample in the
/// phase) or Condition 2 (k_j phases). Every Case-B allocation is checked
/// against y <= z_{j-1} + 4v/alpha2 and violations are reported.
FoldedSegmentation segment_folded(const Trace& trace, int j, const PotentialConfig& cfg);

}  // namespace balloc
