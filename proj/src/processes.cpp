#include "balloc/processes.hpp"

#include <algorithm>
#include <cmath>

namespace balloc {

std::string process_kind_name(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::DChoice: return "dchoice";
    case ProcessKind::Memory: return "memory";
    case ProcessKind::WeakMemory: return "weak-memory";
    case ProcessKind::ResetMemory: return "reset-memory";
    case ProcessKind::OnePlusBeta: return "one-plus-beta";
  }
  return "?";
}

void ProcessConfig::validate() const {
  if (n == 0) throw ValidationError("process config: n must be >= 1");
  if (dist.n() != n) throw ValidationError("process config: distribution size != n");
  switch (kind) {
    case ProcessKind::DChoice:
    case ProcessKind::WeakMemory:
    case ProcessKind::ResetMemory:
      if (d < 1) throw ValidationError("process config: d must be >= 1");
      break;
    case ProcessKind::OnePlusBeta:
      if (!(beta >= 0.0 && beta <= 1.0))
        throw ValidationError("process config: beta must be in [0,1]");
      break;
    case ProcessKind::Memory:
      break;
  }
  if (weights.has_value()) {
    const bool ok = (kind == ProcessKind::DChoice && d <= 2) ||
                    (kind == ProcessKind::WeakMemory && d == 2);
    if (!ok)
      throw ValidationError(
          "weighted mode is only supported for onechoice, twochoice and 2-weak-memory");
  }
}

std::vector<std::uint64_t> snapshot_grid(std::size_t n, std::uint64_t m) {
  std::vector<std::uint64_t> grid;
  double g = static_cast<double>(n);
  while (true) {
    const auto t = static_cast<std::uint64_t>(std::ceil(g));
    if (t > m) break;
    grid.push_back(t);
    g *= 1.25;
  }
  for (std::uint64_t t = n; t <= m; t += n) grid.push_back(t);
  grid.push_back(m);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

namespace {

template <typename LoadT>
Trace run_process_impl(const ProcessConfig& cfg, Rng& rng) {
  ProcessState<LoadT> st = ProcessState<LoadT>::start(cfg.n);
  Trace tr;
  tr.n = cfg.n;
  tr.m = cfg.m;
  tr.weighted = cfg.weights.has_value();
  const std::vector<std::uint64_t> grid = snapshot_grid(cfg.n, cfg.m);
  std::size_t grid_pos = 0;

  auto take_snapshot = [&](std::uint64_t t) {
    const double mean =
        static_cast<double>(st.total_weight) / static_cast<double>(cfg.n);
    LoadT mn = st.loads[0];
    for (LoadT v : st.loads) mn = std::min(mn, v);
    SnapshotRecord rec;
    rec.t = t;
    rec.gap = st.current_gap();
    rec.ymax = rec.gap;
    rec.ymin = static_cast<double>(mn) - mean;
    tr.snapshots.push_back(rec);
    tr.max_gap = std::max(tr.max_gap, rec.gap);
  };

  std::vector<std::uint32_t> samples;
  samples.reserve(std::max<std::uint32_t>(cfg.d, 2));
  if (cfg.m == 0) take_snapshot(0);

  for (std::uint64_t t = 0; t < cfg.m; ++t) {
    samples.clear();
    std::uint32_t num_samples = 1;
    if (cfg.kind == ProcessKind::DChoice) {
      num_samples = cfg.d;
    } else if (cfg.kind == ProcessKind::OnePlusBeta) {
      // beta = 0 and beta = 1 degenerate to OneChoice/TwoChoice without
      // consuming the Bernoulli draw, so those traces match exactly per seed
      if (cfg.beta >= 1.0) num_samples = 2;
      else if (cfg.beta <= 0.0) num_samples = 1;
      else num_samples = rng.bernoulli(cfg.beta) ? 2 : 1;
    }
    for (std::uint32_t k = 0; k < num_samples; ++k)
      samples.push_back(static_cast<std::uint32_t>(cfg.dist.sample(rng)));

    LoadT w;
    if constexpr (std::is_floating_point_v<LoadT>) {
      w = cfg.weights ? cfg.weights->sample(rng) : 1.0;
    } else {
      w = 1;
    }

    const LoadT prev_max = st.max_load;
    std::uint32_t alloc = 0;
    switch (cfg.kind) {
      case ProcessKind::DChoice:
      case ProcessKind::OnePlusBeta:
        alloc = st.dchoice_step(samples, w, rng);
        break;
      case ProcessKind::Memory:
        alloc = st.memory_step(samples[0], w);
        break;
      case ProcessKind::WeakMemory:
        alloc = st.weak_memory_step(samples[0], w, cfg.d);
        break;
      case ProcessKind::ResetMemory:
        alloc = st.reset_memory_step(samples[0], w, cfg.d);
        break;
    }
    // the gap only peaks right after the max load grows; between such steps
    // it strictly decreases as the average rises
    if (st.max_load != prev_max) tr.max_gap = std::max(tr.max_gap, st.current_gap());

    if (cfg.full_trace) {
      StepRecord rec;
      rec.t = t + 1;
      rec.sampled = samples;
      rec.alloc = alloc;
      rec.cache_after = st.cache;
      rec.weight = static_cast<double>(w);
      rec.gap = st.current_gap();
      tr.steps.push_back(std::move(rec));
    }
    if (grid_pos < grid.size() && grid[grid_pos] == t + 1) {
      take_snapshot(t + 1);
      ++grid_pos;
    }
  }

  tr.final_gap = cfg.m == 0 ? 0.0 : st.current_gap();
  tr.total_weight = static_cast<double>(st.total_weight);
  return tr;
}

}  // namespace

Trace run_process(const ProcessConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.weights.has_value()) return run_process_impl<double>(cfg, rng);
  return run_process_impl<std::uint64_t>(cfg, rng);
}

}  // namespace balloc
