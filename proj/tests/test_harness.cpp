#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "balloc/harness.hpp"

using namespace balloc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("balloc_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string body_after_header(const std::string& text) {
  const auto pos = text.find('\n');
  return pos == std::string::npos ? std::string() : text.substr(pos + 1);
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.process = "memory";
  cfg.n = 64;
  cfg.m = 64 * 20;
  cfg.trials = 6;
  cfg.master_seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("config round-trips through JSON") {
  ExperimentConfig cfg;
  cfg.process = "weak-memory";
  cfg.d = 3;
  cfg.beta = 0.25;
  cfg.dist = "step:a=2,b=2";
  cfg.weights = "exp";
  cfg.n = 12;
  cfg.m = 500;
  cfg.trials = 4;
  cfg.master_seed = 0xDEADBEEF;
  cfg.full_trace = true;
  const auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.hash() == cfg.hash());
}

TEST_CASE("run_experiment") {
  SUBCASE("trivial single-bin runs have zero gap") {
    const auto dir = fresh_dir("trivial");
    ExperimentConfig cfg;
    cfg.process = "onechoice";
    cfg.n = 1;
    cfg.m = 3;
    cfg.trials = 2;
    const auto paths = run_experiment(cfg, dir);
    const auto csv = read_file(paths.summary);
    CHECK(csv.find("0,0,0") != std::string::npos);  // trial 0, gaps 0
    std::size_t rows = 0;
    for (char c : csv) rows += c == '\n';
    CHECK(rows == 3);  // header + 2 trials
  }

  SUBCASE("identical configs give identical summaries and trace bodies") {
    const auto d1 = fresh_dir("rep1");
    const auto d2 = fresh_dir("rep2");
    const auto cfg = small_config();
    const auto p1 = run_experiment(cfg, d1);
    const auto p2 = run_experiment(cfg, d2);
    CHECK(read_file(p1.summary) == read_file(p2.summary));
    CHECK(read_file(p1.snapshots) == read_file(p2.snapshots));
    CHECK(body_after_header(read_file(p1.trace)) == body_after_header(read_file(p2.trace)));
  }

  SUBCASE("thread count does not change any output") {
    const auto d1 = fresh_dir("thr1");
    const auto d8 = fresh_dir("thr8");
    auto cfg = small_config();
    cfg.full_trace = true;
    const auto p1 = run_experiment(cfg, d1, false, 1u);
    const auto p8 = run_experiment(cfg, d8, false, 8u);
    CHECK(read_file(p1.summary) == read_file(p8.summary));
    CHECK(body_after_header(read_file(p1.trace)) == body_after_header(read_file(p8.trace)));
  }

  SUBCASE("trial records are independent of the trial count") {
    const auto d1 = fresh_dir("sub1");
    const auto d2 = fresh_dir("sub2");
    auto a = small_config();
    a.trials = 3;
    auto b = small_config();
    b.trials = 6;
    const auto pa = run_experiment(a, d1);
    const auto pb = run_experiment(b, d2);
    const auto sa = read_file(pa.summary);
    const auto sb = read_file(pb.summary);
    CHECK(sb.substr(0, sa.size()) == sa);  // first three trials coincide
  }

  SUBCASE("completed runs are reused, force reruns") {
    const auto dir = fresh_dir("cache");
    const auto cfg = small_config();
    const auto p1 = run_experiment(cfg, dir);
    const auto t1 = fs::last_write_time(p1.summary);
    const auto p2 = run_experiment(cfg, dir);  // cache hit
    CHECK(fs::last_write_time(p2.summary) == t1);
    run_experiment(cfg, dir, true);
    CHECK(read_file(p1.summary) == read_file(p2.summary));
  }

  SUBCASE("jsonl records parse and re-serialize identically") {
    const auto dir = fresh_dir("schema");
    auto cfg = small_config();
    cfg.n = 8;
    cfg.m = 64;
    cfg.trials = 2;
    cfg.full_trace = true;
    const auto paths = run_experiment(cfg, dir);
    std::ifstream in(paths.trace);
    std::string line;
    std::size_t steps = 0, snaps = 0;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.dump() == line);
      const std::string kind = j.at("kind");
      if (kind == "step") {
        ++steps;
        CHECK(j.contains("sampled"));
        CHECK(j.contains("alloc"));
        CHECK(j.contains("cache"));
      } else {
        REQUIRE(kind == "snap");
        ++snaps;
        CHECK(j.contains("gap"));
      }
    }
    CHECK(steps == 2 * 64);
    CHECK(snaps >= 2);

    const TraceFile tf = load_trace(paths.trace);
    REQUIRE(tf.trials.size() == 2);
    CHECK(tf.trials.at(0).steps.size() == 64);
    CHECK(tf.trials.at(0).snapshots.back().t == 64);
  }
}

TEST_CASE("sweep") {
  SUBCASE("one cell equals run_experiment") {
    const auto dir = fresh_dir("sweep1");
    SweepConfig sc;
    sc.base = small_config();
    const auto res = sweep(sc, dir);
    CHECK(res.cells == 1);
    const auto direct = run_experiment(small_config(), dir);
    const auto merged = read_file(res.summary);
    const auto single = read_file(direct.summary);
    CHECK(merged == single);
  }

  SUBCASE("grid cells multiply and rows match cells x trials") {
    const auto dir = fresh_dir("sweep4");
    SweepConfig sc;
    sc.base = small_config();
    sc.base.trials = 2;
    sc.axes["n"] = {nlohmann::json(32), nlohmann::json(64)};
    sc.axes["process"] = {nlohmann::json("memory"), nlohmann::json("twochoice")};
    sc.axes["m_mult"] = {nlohmann::json(10)};
    const auto res = sweep(sc, dir);
    CHECK(res.cells == 4);
    const auto csv = read_file(res.summary);
    std::size_t rows = 0;
    for (char c : csv) rows += c == '\n';
    CHECK(rows == 1 + 4 * 2);
  }

  SUBCASE("m_mult applies after n") {
    SweepConfig sc;
    sc.base = small_config();
    sc.axes["n"] = {nlohmann::json(16)};
    sc.axes["m_mult"] = {nlohmann::json(5)};
    const auto cells = sc.cells();
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].m == 80);
  }

  SUBCASE("a/b axes rewrite step specs") {
    SweepConfig sc;
    sc.base = small_config();
    sc.base.dist = "step:a=2,b=2";
    sc.base.n = 12;
    sc.axes["a"] = {nlohmann::json(3.0)};
    sc.axes["b"] = {nlohmann::json(3.0)};
    const auto cells = sc.cells();
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].dist == "step:a=3,b=3");
  }

  SUBCASE("oversized grids need force") {
    const auto dir = fresh_dir("sweep_guard");
    SweepConfig sc;
    sc.base = small_config();
    std::vector<nlohmann::json> lots;
    for (int i = 0; i < 101; ++i) lots.push_back(nlohmann::json(i + 2));
    sc.axes["n"] = lots;
    sc.axes["m"] = lots;
    CHECK_THROWS_AS(sweep(sc, dir), ValidationError);
  }

  SUBCASE("unknown axes rejected") {
    SweepConfig sc;
    sc.base = small_config();
    sc.axes["q"] = {nlohmann::json(1)};
    CHECK_THROWS_AS(sc.cells(), ValidationError);
  }
}

TEST_CASE("report") {
  SUBCASE("gap-vs-n medians sit near the one-choice reference") {
    const auto dir = fresh_dir("report_n");
    SweepConfig sc;
    sc.base.process = "onechoice";
    sc.base.trials = 20;
    sc.base.master_seed = 5;
    sc.axes["n"] = {nlohmann::json(256), nlohmann::json(1024)};
    sc.axes["m_mult"] = {nlohmann::json(1)};
    const auto res = sweep(sc, dir);
    const auto out = dir / "gap_vs_n.csv";
    report(res.summary, "gap-vs-n", out);
    std::ifstream in(out);
    std::string line;
    std::getline(in, line);
    CHECK(line == "process,n,trials,median_gap,q25,q75,log_n,loglog_n");
    while (std::getline(in, line)) {
      const auto f = csv_split(line);
      const double median = std::stod(f[3]);
      const double log_n = std::stod(f[6]);
      const double loglog_n = std::stod(f[7]);
      const double ref = log_n / loglog_n;
      CHECK(median >= ref / 3.0);
      CHECK(median <= ref * 3.0);
    }
  }

  SUBCASE("gap-vs-m memory trajectory is flat after burn-in") {
    const auto dir = fresh_dir("report_m");
    auto cfg = small_config();
    cfg.n = 256;
    cfg.m = 256 * 200;
    cfg.trials = 10;
    const auto paths = run_experiment(cfg, dir);
    const auto out = dir / "gap_vs_m.csv";
    report(paths.snapshots, "gap-vs-m", out);
    std::ifstream in(out);
    std::string line;
    std::getline(in, line);
    double lo = 1e9, hi = -1e9;
    while (std::getline(in, line)) {
      const auto f = csv_split(line);
      const std::uint64_t t = std::stoull(f[1]);
      if (t < 50 * 256) continue;  // burn-in
      const double med = std::stod(f[3]);
      lo = std::min(lo, med);
      hi = std::max(hi, med);
    }
    CHECK(hi - lo <= 2.0);
  }

  SUBCASE("bias dichotomy keys by process and dist") {
    const auto dir = fresh_dir("report_bias");
    SweepConfig sc;
    sc.base = small_config();
    sc.base.n = 12;
    sc.base.m = 240;
    sc.base.trials = 2;
    sc.base.dist = "step:a=2,b=2";
    sc.axes["process"] = {nlohmann::json("memory"), nlohmann::json("twochoice")};
    const auto res = sweep(sc, dir);
    const auto out = dir / "bias.csv";
    report(res.snapshots, "bias-dichotomy", out);
    const auto text = read_file(out);
    CHECK(text.find("memory,\"step:a=2,b=2\"") != std::string::npos);
    CHECK(text.find("twochoice,\"step:a=2,b=2\"") != std::string::npos);
  }

  SUBCASE("errors") {
    const auto dir = fresh_dir("report_err");
    const auto empty = dir / "empty.csv";
    std::ofstream(empty) << "process,n,final_gap\n";
    CHECK_THROWS_AS(report(empty, "gap-vs-n", dir / "out.csv"), ValidationError);
    const auto good = dir / "good.csv";
    std::ofstream(good) << "process,n,final_gap\nmemory,8,1\n";
    CHECK_THROWS_AS(report(good, "gap-vs-q", dir / "out.csv"), ValidationError);
  }
}

TEST_CASE("csv helpers") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("q\"q") == "\"q\"\"q\"");
  CHECK(csv_split("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
  CHECK(csv_split("x,\"y\"\"z\"") == std::vector<std::string>{"x", "y\"z"});
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(2) == "2");
}
