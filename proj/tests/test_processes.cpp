#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "balloc/processes.hpp"

using namespace balloc;

namespace {

ProcessConfig config(ProcessKind kind, std::size_t n, std::uint64_t m, std::uint32_t d = 2,
                     double beta = 0.5) {
  ProcessConfig cfg;
  cfg.kind = kind;
  cfg.d = d;
  cfg.beta = beta;
  cfg.dist = make_uniform(n);
  cfg.n = n;
  cfg.m = m;
  return cfg;
}

// The pairwise box formulation of 2-WeakMemory on uniform sampling: sample
// two bins, first ball to the first sample, second ball to whichever of the
// two had the smaller load before the pair. Load ties resolve by the frozen
// ordering (load desc, id asc), under which the higher id is "lighter".
std::vector<std::uint32_t> two_weak_memory_box(std::size_t n, std::uint64_t pairs, Rng& rng) {
  std::vector<std::uint64_t> loads(n, 0);
  const auto dist = make_uniform(n);
  std::vector<std::uint32_t> allocs;
  for (std::uint64_t p = 0; p < pairs; ++p) {
    const std::uint32_t i1 = dist.sample(rng);
    const std::uint32_t i2 = dist.sample(rng);
    const std::uint64_t l1 = loads[i1], l2 = loads[i2];
    ++loads[i1];
    allocs.push_back(i1);
    const std::uint32_t second = (l2 < l1 || (l1 == l2 && i2 > i1)) ? i2 : i1;
    ++loads[second];
    allocs.push_back(second);
  }
  return allocs;
}

}  // namespace

TEST_CASE("dchoice") {
  SUBCASE("d=1 allocates the sample") {
    auto st = ProcessState<std::uint64_t>::start(4);
    Rng rng(3);
    const std::uint32_t samples[] = {2};
    CHECK(st.dchoice_step(samples, 1, rng) == 2);
    CHECK(st.loads[2] == 1);
  }

  SUBCASE("strict minimum wins") {
    auto st = ProcessState<std::uint64_t>::start(2);
    st.loads = {5, 0};
    st.total_weight = 5;
    Rng rng(3);
    const std::uint32_t samples[] = {0, 1};
    CHECK(st.dchoice_step(samples, 1, rng) == 1);
  }

  SUBCASE("ties split evenly") {
    Rng rng(17);
    int first = 0;
    const int reps = 100000;
    for (int i = 0; i < reps; ++i) {
      auto st = ProcessState<std::uint64_t>::start(2);
      st.loads = {3, 3};
      st.total_weight = 6;
      const std::uint32_t samples[] = {0, 1};
      if (st.dchoice_step(samples, 1, rng) == 0) ++first;
    }
    const double sigma = std::sqrt(0.25 / reps);
    CHECK(std::abs(first / static_cast<double>(reps) - 0.5) <= 4 * sigma);
  }
}

TEST_CASE("memory case table") {
  SUBCASE("empty cache: allocate sample and cache it") {
    auto st = ProcessState<std::uint64_t>::start(3);
    CHECK(st.memory_step(1, 1) == 1);
    CHECK(st.cache == 1);
  }

  SUBCASE("heavier sample: ball goes to the cache, cache stays") {
    auto st = ProcessState<std::uint64_t>::start(2);
    st.loads = {2, 0};
    st.total_weight = 2;
    st.cache = 1;
    CHECK(st.memory_step(0, 1) == 1);
    CHECK(st.cache == 1);
  }

  SUBCASE("equal loads: ball goes to the sample, cache stays") {
    auto st = ProcessState<std::uint64_t>::start(2);
    st.loads = {1, 1};
    st.total_weight = 2;
    st.cache = 1;
    CHECK(st.memory_step(0, 1) == 0);
    CHECK(st.cache == 1);
  }

  SUBCASE("lighter sample: ball goes to the sample and it takes the cache") {
    auto st = ProcessState<std::uint64_t>::start(2);
    st.loads = {0, 2};
    st.total_weight = 2;
    st.cache = 1;
    CHECK(st.memory_step(0, 1) == 0);
    CHECK(st.cache == 0);
  }

  SUBCASE("never allocates above both the sample and the cache") {
    Rng rng(91);
    auto st = ProcessState<std::uint64_t>::start(8);
    const auto dist = make_uniform(8);
    for (int t = 0; t < 20000; ++t) {
      const std::uint32_t s = dist.sample(rng);
      const std::uint64_t load_s = st.loads[s];
      const std::uint64_t load_b = st.cache ? st.loads[*st.cache] : 0;
      const std::uint32_t a = st.memory_step(s, 1);
      const std::uint64_t load_a = st.loads[a] - 1;  // before the increment
      CHECK(!(load_a > load_s && st.cache && load_a > load_b));
    }
  }
}

TEST_CASE("weak memory") {
  SUBCASE("run boundary is one-choice plus cache reset") {
    auto st = ProcessState<std::uint64_t>::start(4);
    st.loads = {9, 9, 9, 9};
    st.total_weight = 36;
    CHECK(st.weak_memory_step(3, 1, 2) == 3);
    CHECK(st.cache == 3);
  }

  SUBCASE("hand trace: d=2, n=2, run starts at loads [1,0]") {
    auto st = ProcessState<std::uint64_t>::start(2);
    st.loads = {1, 0};
    st.total_weight = 1;
    CHECK(st.weak_memory_step(1, 1, 2) == 1);  // boundary: sample bin 2
    CHECK(st.weak_memory_step(0, 1, 2) == 1);  // frozen rank of bin 1 is higher
    CHECK(st.loads == std::vector<std::uint64_t>{1, 2});
  }

  SUBCASE("repeated samples on equal loads all land on the first sample") {
    auto st = ProcessState<std::uint64_t>::start(4);
    for (int s = 0; s < 3; ++s) CHECK(st.weak_memory_step(2, 1, 3) == 2);
    CHECK(st.loads[2] == 3);
  }

  SUBCASE("frozen comparisons ignore within-run load changes") {
    // run of 3: samples (0, 0, 1); after two balls on bin 0 its current
    // load beats bin 1, but the frozen ordering still ranks bin 1 lower
    auto st = ProcessState<std::uint64_t>::start(2);
    CHECK(st.weak_memory_step(0, 1, 3) == 0);
    CHECK(st.weak_memory_step(0, 1, 3) == 0);
    CHECK(st.weak_memory_step(1, 1, 3) == 1);
    CHECK(st.cache == 1);
  }

  SUBCASE("lazy frozen ordering matches a materialized one") {
    Rng rng(2718);
    const std::size_t n = 16;
    const auto dist = make_uniform(n);
    for (std::uint32_t d : {2u, 3u, 5u}) {
      auto st = ProcessState<std::uint64_t>::start(n);
      std::vector<std::uint32_t> rank_of(n);
      std::uint32_t cache_rank = 0;
      for (int t = 0; t < 5000; ++t) {
        if (st.step % d == 0) {
          const auto ord = ordering_by_load(st.load_vector());
          for (std::uint32_t r = 0; r < n; ++r) rank_of[ord.sigma[r]] = r;
        }
        const std::uint32_t s = dist.sample(rng);
        std::uint32_t expected;
        if (st.step % d == 0) {
          expected = s;
          cache_rank = rank_of[s];
        } else if (rank_of[s] > cache_rank) {
          expected = s;
          cache_rank = rank_of[s];
        } else {
          expected = *st.cache;
        }
        CHECK(st.weak_memory_step(s, 1, d) == expected);
      }
    }
  }

  SUBCASE("d=2 on uniform equals the pairwise box formulation") {
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
      for (std::size_t n : {2ul, 8ul, 64ul}) {
        Rng r1(seed), r2(seed);
        const auto dist = make_uniform(n);
        auto st = ProcessState<std::uint64_t>::start(n);
        std::vector<std::uint32_t> ours;
        for (int t = 0; t < 1000; ++t)
          ours.push_back(st.weak_memory_step(dist.sample(r1), 1, 2));
        CHECK(ours == two_weak_memory_box(n, 500, r2));
      }
    }
  }
}

TEST_CASE("reset memory") {
  SUBCASE("d=1 is pure one-choice") {
    auto st = ProcessState<std::uint64_t>::start(3);
    st.loads = {7, 0, 0};
    st.total_weight = 7;
    CHECK(st.reset_memory_step(0, 1, 1) == 0);  // heavy bin still gets the ball
    CHECK(st.cache == 0);
  }

  SUBCASE("within-run uses the memory case table") {
    auto st = ProcessState<std::uint64_t>::start(2);
    st.loads = {2, 0};
    st.total_weight = 2;
    st.cache = 1;
    st.step = 1;  // mid-run
    CHECK(st.reset_memory_step(0, 1, 2) == 1);
  }

  SUBCASE("boundary discards the previous cache") {
    auto st = ProcessState<std::uint64_t>::start(3);
    st.loads = {0, 0, 5};
    st.total_weight = 5;
    st.cache = 0;
    CHECK(st.reset_memory_step(2, 1, 2) == 2);  // step 0 is a boundary
    CHECK(st.cache == 2);
  }

  SUBCASE("single run equals memory on identical samples") {
    Rng r1(31), r2(31);
    const std::size_t n = 10;
    const auto dist = make_uniform(n);
    auto reset = ProcessState<std::uint64_t>::start(n);
    auto mem = ProcessState<std::uint64_t>::start(n);
    for (int t = 0; t < 3000; ++t) {
      const std::uint32_t s = dist.sample(r1);
      CHECK(reset.reset_memory_step(s, 1, 1u << 30) == mem.memory_step(dist.sample(r2), 1));
    }
    CHECK(reset.loads == mem.loads);
  }
}

TEST_CASE("one plus beta") {
  SUBCASE("beta 0 matches one-choice per seed") {
    auto cfg = config(ProcessKind::OnePlusBeta, 32, 2000, 1, 0.0);
    auto one = config(ProcessKind::DChoice, 32, 2000, 1);
    Rng r1(5), r2(5);
    CHECK(run_process(cfg, r1).final_gap == run_process(one, r2).final_gap);
  }

  SUBCASE("beta 1 matches two-choice per seed") {
    auto cfg = config(ProcessKind::OnePlusBeta, 32, 2000, 1, 1.0);
    auto two = config(ProcessKind::DChoice, 32, 2000, 2);
    Rng r1(5), r2(5);
    CHECK(run_process(cfg, r1).final_gap == run_process(two, r2).final_gap);
  }

  SUBCASE("two-sample fraction near beta") {
    auto cfg = config(ProcessKind::OnePlusBeta, 8, 100000, 1, 0.5);
    cfg.full_trace = true;
    Rng rng(77);
    const Trace tr = run_process(cfg, rng);
    std::uint64_t twos = 0;
    for (const auto& s : tr.steps) twos += s.sampled.size() == 2;
    const double frac = static_cast<double>(twos) / 1e5;
    const double sigma = std::sqrt(0.25 / 1e5);
    CHECK(std::abs(frac - 0.5) <= 4 * sigma);
  }
}

TEST_CASE("run_process") {
  SUBCASE("one bin: gap stays zero") {
    Rng rng(1);
    const Trace tr = run_process(config(ProcessKind::DChoice, 1, 5, 1), rng);
    CHECK(tr.final_gap == 0.0);
  }

  SUBCASE("deterministic re-run") {
    auto cfg = config(ProcessKind::Memory, 1024, 1024 * 100);
    Rng r1(42), r2(42);
    const Trace a = run_process(cfg, r1);
    const Trace b = run_process(cfg, r2);
    CHECK(a.final_gap == b.final_gap);
    REQUIRE(a.snapshots.size() == b.snapshots.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
      CHECK(a.snapshots[i].t == b.snapshots[i].t);
      CHECK(a.snapshots[i].gap == b.snapshots[i].gap);
    }
  }

  SUBCASE("conservation, unit") {
    auto cfg = config(ProcessKind::WeakMemory, 64, 9999, 3);
    cfg.full_trace = true;
    Rng rng(8);
    const Trace tr = run_process(cfg, rng);
    CHECK(tr.total_weight == 9999.0);
    CHECK(tr.snapshots.back().t == 9999);
  }

  SUBCASE("conservation, weighted") {
    auto cfg = config(ProcessKind::WeakMemory, 64, 5000, 2);
    cfg.weights = WeightDistribution::exponential();
    cfg.full_trace = true;
    Rng rng(9);
    const Trace tr = run_process(cfg, rng);
    double drawn = 0;
    for (const auto& s : tr.steps) drawn += s.weight;
    CHECK(std::abs(tr.total_weight - drawn) <= 1e-9 * drawn);
  }

  SUBCASE("weighted mode rejects memory") {
    auto cfg = config(ProcessKind::Memory, 8, 10);
    cfg.weights = WeightDistribution::exponential();
    Rng rng(1);
    CHECK_THROWS_AS(run_process(cfg, rng), ValidationError);
    auto cfg2 = config(ProcessKind::WeakMemory, 8, 10, 3);
    cfg2.weights = WeightDistribution::exponential();
    CHECK_THROWS_AS(run_process(cfg2, rng), ValidationError);
  }

  SUBCASE("two-choice lightly loaded: max load near log2 log2 n") {
    int good = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
      Rng rng(derive_trial_seed(1000, trial));
      const Trace tr = run_process(config(ProcessKind::DChoice, 1024, 1024, 2), rng);
      const double max_load = tr.final_gap + 1.0;
      if (max_load <= std::log2(std::log2(1024.0)) + 4.0) ++good;
    }
    CHECK(good >= 95);
  }

  SUBCASE("memory gap stays bounded in m under a severely biased distribution") {
    // one bin carries ~61% of the sampling mass, the rest ~0.6% each; the
    // cache keeps absorbing the oversampled bin, so the gap must not grow
    // with m (contrast: one/two-choice diverge here)
    std::vector<double> probs(64, 1.0);
    probs[0] = 100.0;
    double sum = 0;
    for (double p : probs) sum += p;
    for (double& p : probs) p /= sum;
    ProcessConfig cfg;
    cfg.kind = ProcessKind::Memory;
    cfg.dist = make_biased(probs);
    cfg.n = 64;
    auto median_gap = [&](std::uint64_t m) {
      std::vector<double> gaps;
      for (std::uint64_t trial = 0; trial < 10; ++trial) {
        cfg.m = m;
        Rng rng(derive_trial_seed(3000, trial));
        gaps.push_back(run_process(cfg, rng).final_gap);
      }
      std::sort(gaps.begin(), gaps.end());
      return gaps[gaps.size() / 2];
    };
    const double g_small = median_gap(50 * 64);
    const double g_large = median_gap(5000 * 64);
    CHECK(g_large <= g_small + 1.0);
  }

  SUBCASE("one-choice gap grows like sqrt(T ln n)") {
    std::vector<double> gaps;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
      Rng rng(derive_trial_seed(2000, trial));
      gaps.push_back(run_process(config(ProcessKind::DChoice, 100, 100 * 100, 1), rng).final_gap);
    }
    std::sort(gaps.begin(), gaps.end());
    const double median = gaps[gaps.size() / 2];
    const double ref = std::sqrt(100.0 * std::log(100.0));
    CHECK(median >= ref / 3.0);
    CHECK(median <= ref * 3.0);
  }
}

TEST_CASE("snapshot grid") {
  const auto grid = snapshot_grid(100, 1000);
  CHECK(grid.front() == 100);
  CHECK(grid.back() == 1000);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  for (std::uint64_t mult = 100; mult <= 1000; mult += 100)
    CHECK(std::find(grid.begin(), grid.end(), mult) != grid.end());
  CHECK(snapshot_grid(10, 5) == std::vector<std::uint64_t>{5});
  CHECK(snapshot_grid(10, 0) == std::vector<std::uint64_t>{0});
}
