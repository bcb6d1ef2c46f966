#pragma once

#include <cassert>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "balloc/core.hpp"
#include "balloc/rng.hpp"
#include "balloc/sampling.hpp"

namespace balloc {

enum class ProcessKind { DChoice, Memory, WeakMemory, ResetMemory, OnePlusBeta };

std::string process_kind_name(ProcessKind kind);

/// Allocation state machine shared by the simulator and the exact
/// enumeration oracles: samples are injected, so both paths run the same
/// transition code. LoadT is std::uint64_t (unit balls) or double (weights).
template <typename LoadT>
struct ProcessState {
  std::vector<LoadT> loads;
  LoadT total_weight{};
  LoadT max_load{};
  std::uint64_t step = 0;  // balls allocated so far
  std::optional<std::uint32_t> cache;

  static ProcessState start(std::size_t n) {
    ProcessState st;
    st.loads.assign(n, LoadT{});
    return st;
  }

  template <typename T>
  static ProcessState from_load_vector(const LoadVector<T>& lv,
                                       std::optional<std::uint32_t> cache = std::nullopt) {
    ProcessState st;
    st.loads.assign(lv.loads.begin(), lv.loads.end());
    st.total_weight = static_cast<LoadT>(lv.total_weight);
    st.max_load = LoadT{};
    for (LoadT v : st.loads) st.max_load = std::max(st.max_load, v);
    st.cache = cache;
    return st;
  }

  std::size_t n() const { return loads.size(); }
  double current_gap() const {
    return static_cast<double>(max_load) -
           static_cast<double>(total_weight) / static_cast<double>(n());
  }
  LoadVector<LoadT> load_vector() const { return {loads, total_weight}; }

  /// Sample d bins i.i.d. (given), allocate to a least loaded sample; ties
  /// among distinct tied samples are broken uniformly with one extra draw.
  std::uint32_t dchoice_step(std::span<const std::uint32_t> samples, LoadT w, Rng& rng) {
    LoadT best_load = loads[samples[0]];
    for (std::size_t k = 1; k < samples.size(); ++k)
      best_load = std::min(best_load, loads[samples[k]]);
    auto is_new_tied = [&](std::size_t k) {
      if (loads[samples[k]] != best_load) return false;
      for (std::size_t q = 0; q < k; ++q)
        if (samples[q] == samples[k]) return false;
      return true;
    };
    std::size_t tied_count = 0;
    for (std::size_t k = 0; k < samples.size(); ++k) tied_count += is_new_tied(k);
    std::uint64_t pick = tied_count == 1 ? 0 : rng.next_below(tied_count);
    std::uint32_t chosen = samples[0];
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (!is_new_tied(k)) continue;
      if (pick == 0) {
        chosen = samples[k];
        break;
      }
      --pick;
    }
    apply(chosen, w);
    return chosen;
  }

  /// Memory case table: allocate sampled if its load is below (cache moves)
  /// or equal to (cache stays) the cached load; otherwise allocate the cache.
  std::uint32_t memory_step(std::uint32_t sampled, LoadT w) {
    std::uint32_t alloc;
    if (!cache.has_value() || loads[sampled] < loads[*cache]) {
      alloc = sampled;
      cache = sampled;
    } else if (loads[sampled] == loads[*cache]) {
      alloc = sampled;
    } else {
      alloc = *cache;
    }
    assert(!(loads[alloc] > loads[sampled] &&
             (!cache.has_value() || loads[alloc] > loads[*cache])));
    apply(alloc, w);
    return alloc;
  }

  /// d-WeakMemory: at run boundaries (d | step) allocate the sample and
  /// reset the cache; within a run compare ranks under the ordering frozen
  /// at the boundary. The frozen ordering is realized lazily: rank(i) is
  /// (load at run start desc, id asc), and the run-start load is the current
  /// load minus what this run added (run_delta_), so no sort is needed.
  std::uint32_t weak_memory_step(std::uint32_t sampled, LoadT w, std::uint32_t d) {
    std::uint32_t alloc;
    if (step % d == 0) {
      run_delta_.clear();
      alloc = sampled;
      cache = sampled;
    } else {
      const LoadT fs = frozen_load(sampled);
      const LoadT fb = frozen_load(*cache);
      const bool sampled_lighter = fs < fb || (fs == fb && sampled > *cache);
      if (sampled_lighter) {
        alloc = sampled;
        cache = sampled;
      } else {
        alloc = *cache;
      }
    }
    run_delta_.emplace_back(alloc, w);
    apply(alloc, w);
    return alloc;
  }

  /// d-ResetMemory: OneChoice + cache reset at run boundaries, the Memory
  /// case table (current loads) within runs.
  std::uint32_t reset_memory_step(std::uint32_t sampled, LoadT w, std::uint32_t d) {
    if (step % d == 0) {
      cache = sampled;
      apply(sampled, w);
      return sampled;
    }
    return memory_step(sampled, w);
  }

  LoadT frozen_load(std::uint32_t bin) const {
    LoadT v = loads[bin];
    for (const auto& [b, dw] : run_delta_) {
      if (b == bin) v -= dw;
    }
    return v;
  }

 private:
  void apply(std::uint32_t bin, LoadT w) {
    loads[bin] += w;
    total_weight += w;
    max_load = std::max(max_load, loads[bin]);
    ++step;
  }

  std::vector<std::pair<std::uint32_t, LoadT>> run_delta_;  // this run's allocations
};

struct ProcessConfig {
  ProcessKind kind = ProcessKind::DChoice;
  std::uint32_t d = 1;      // DChoice/WeakMemory/ResetMemory parameter
  double beta = 0.5;        // OnePlusBeta parameter
  SamplingDistribution dist;
  std::optional<WeightDistribution> weights;
  std::size_t n = 0;
  std::uint64_t m = 0;
  bool full_trace = false;

  void validate() const;
};

/// One allocation, as recorded in full traces. t is 1-based (the t-th ball).
struct StepRecord {
  std::uint64_t t = 0;
  std::vector<std::uint32_t> sampled;
  std::uint32_t alloc = 0;
  std::optional<std::uint32_t> cache_after;
  double weight = 1.0;
  double gap = 0.0;
};

struct SnapshotRecord {
  std::uint64_t t = 0;
  double gap = 0.0;
  double ymax = 0.0;
  double ymin = 0.0;
};

struct Trace {
  std::size_t n = 0;
  std::uint64_t m = 0;
  bool weighted = false;
  std::vector<StepRecord> steps;  // empty unless full_trace
  std::vector<SnapshotRecord> snapshots;
  double final_gap = 0.0;
  double max_gap = 0.0;
  double total_weight = 0.0;
};

/// Snapshot step counts: the geometric grid {ceil(n * 1.25^k)} plus every
/// multiple of n, capped at m, plus m itself.
std::vector<std::uint64_t> snapshot_grid(std::size_t n, std::uint64_t m);

/// Allocate m balls with the configured process, recording snapshots (and
/// per-step records when full_trace). Deterministic given (config, rng seed).
Trace run_process(const ProcessConfig& cfg, Rng& rng);

}  // namespace balloc
