// balloc: balanced-allocation experiments and analytics.
//
// Subcommands: run, sweep, report, alloc-vector, verify-drop, fold,
// potentials, c1. Exit codes: 0 ok, 2 validation error, 3 assertion
// failure under --assert.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "balloc/analysis.hpp"
#include "balloc/harness.hpp"

using namespace balloc;
using nlohmann::json;

namespace {

struct AssertionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path);
  json j;
  in >> j;
  return ExperimentConfig::from_json(j);
}

ProcessKind parse_drop_process(const std::string& name) {
  if (name == "memory") return ProcessKind::Memory;
  if (name == "weak-memory") return ProcessKind::WeakMemory;
  if (name == "reset-memory") return ProcessKind::ResetMemory;
  throw ValidationError("verify-drop process must be memory|weak-memory|reset-memory");
}

std::vector<DropState> parse_states(const std::string& spec, std::size_t n, Rng& rng) {
  if (spec.rfind("random:", 0) == 0) {
    unsigned long long count = 0, gap_min = 0;
    if (std::sscanf(spec.c_str(), "random:%llu,%llu", &count, &gap_min) != 2)
      throw ValidationError("bad states spec, expected random:<count>,<gapmin>");
    return random_drop_states(n, count, gap_min, rng);
  }
  std::ifstream in(spec);
  if (!in) throw ValidationError("cannot open states file: " + spec);
  json j;
  in >> j;
  if (!j.is_array()) throw ValidationError("states file must hold a JSON array");
  std::vector<DropState> out;
  for (const auto& item : j) {
    DropState st;
    st.lv = LoadVectorU::from_loads(item.at("loads").get<std::vector<std::uint64_t>>());
    if (item.contains("cache") && !item["cache"].is_null())
      st.cache = item["cache"].get<std::uint32_t>();
    out.push_back(std::move(st));
  }
  return out;
}

AllocationVector parse_vector_spec(const std::string& spec) {
  if (spec.rfind("twochoice:", 0) == 0)
    return twochoice_allocation_vector(std::stoull(spec.substr(10)));
  if (spec.rfind("proxy:", 0) == 0) {
    // proxy:dist=<spec>;n=<int>;d=<int>[;mode=closed|exact]
    std::string dist_spec, mode = "closed";
    std::size_t n = 0;
    std::uint32_t d = 2;
    std::string body = spec.substr(6);
    std::stringstream ss(body);
    std::string part;
    while (std::getline(ss, part, ';')) {
      if (part.rfind("dist=", 0) == 0) dist_spec = part.substr(5);
      else if (part.rfind("n=", 0) == 0) n = std::stoull(part.substr(2));
      else if (part.rfind("d=", 0) == 0) d = static_cast<std::uint32_t>(std::stoul(part.substr(2)));
      else if (part.rfind("mode=", 0) == 0) mode = part.substr(5);
      else throw ValidationError("bad proxy spec part: " + part);
    }
    const auto dist = parse_dist_spec(dist_spec, n);
    const auto rp = mode == "exact" ? exact_run_probs(dist, d)
                                    : weak_memory_run_probs_closed(dist, d);
    return proxy_allocation_vector(rp);
  }
  std::ifstream in(spec);
  if (!in) throw ValidationError("cannot open vector file: " + spec);
  json j;
  in >> j;
  return AllocationVector{j.get<std::vector<double>>()};
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output: " + path);
  out << text;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"balanced-allocation laboratory"};
  app.set_version_flag("--version", std::string("balloc ") + kToolVersion);
  app.require_subcommand(1);

  // ---- run ----
  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  std::string run_config, run_out = "runs";
  ExperimentConfig run_cfg;
  bool run_force = false;
  run_cmd->add_option("--config", run_config, "JSON config file (flags override)");
  run_cmd->add_option("--process", run_cfg.process, "process id");
  run_cmd->add_option("--d", run_cfg.d, "d parameter");
  run_cmd->add_option("--beta", run_cfg.beta, "beta parameter");
  run_cmd->add_option("--dist", run_cfg.dist, "sampling distribution spec");
  run_cmd->add_option("--weights", run_cfg.weights, "weight distribution spec");
  run_cmd->add_option("--n", run_cfg.n, "bins");
  run_cmd->add_option("--m", run_cfg.m, "balls");
  run_cmd->add_option("--trials", run_cfg.trials, "trials");
  run_cmd->add_option("--seed", run_cfg.master_seed, "master seed");
  run_cmd->add_flag("--full-trace", run_cfg.full_trace, "record every step");
  run_cmd->add_option("--out", run_out, "output directory");
  run_cmd->add_flag("--force", run_force, "rerun even if cached");

  // ---- sweep ----
  auto* sweep_cmd = app.add_subcommand("sweep", "run a config grid");
  std::string sweep_config, sweep_out = "runs";
  bool sweep_force = false;
  sweep_cmd->add_option("--config", sweep_config, "sweep JSON (base + axes)")->required();
  sweep_cmd->add_option("--out", sweep_out, "output directory");
  sweep_cmd->add_flag("--force", sweep_force, "allow >1e4 cells / rerun");

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "plot-ready aggregation");
  std::string rep_summary, rep_kind, rep_out;
  report_cmd->add_option("--summary", rep_summary, "summary/snapshots CSV")->required();
  report_cmd->add_option("--kind", rep_kind, "gap-vs-n|gap-vs-m|bias-dichotomy")->required();
  report_cmd->add_option("--out", rep_out, "output CSV")->required();

  // ---- alloc-vector ----
  auto* alloc_cmd = app.add_subcommand("alloc-vector", "run-allocation probabilities");
  std::string av_dist = "uniform", av_mode = "closed", av_out;
  std::size_t av_n = 0;
  std::uint32_t av_d = 2;
  std::uint64_t av_seed = 1;
  alloc_cmd->add_option("--dist", av_dist, "distribution spec");
  alloc_cmd->add_option("--n", av_n, "bins (for uniform/step specs)");
  alloc_cmd->add_option("--d", av_d, "run length");
  alloc_cmd->add_option("--mode", av_mode, "closed|exact|mc[:trials]");
  alloc_cmd->add_option("--seed", av_seed, "seed (mc mode)");
  alloc_cmd->add_option("--out", av_out, "output CSV (default stdout)");

  // ---- verify-drop ----
  auto* drop_cmd = app.add_subcommand("verify-drop", "drift of the hyperbolic potential");
  std::string vd_process = "memory", vd_dist = "uniform", vd_states = "random:50,5",
              vd_mode = "exact", vd_out;
  std::size_t vd_n = 8;
  std::uint32_t vd_d = 2;
  double vd_alpha = 0.3, vd_gap_threshold = -1.0;
  std::uint64_t vd_seed = 1;
  bool vd_assert = false;
  drop_cmd->add_option("--process", vd_process, "memory|weak-memory|reset-memory");
  drop_cmd->add_option("--dist", vd_dist, "distribution spec");
  drop_cmd->add_option("--n", vd_n, "bins");
  drop_cmd->add_option("--alpha", vd_alpha, "smoothing parameter");
  drop_cmd->add_option("--d", vd_d, "steps per run");
  drop_cmd->add_option("--states", vd_states, "file or random:<count>,<gapmin>");
  drop_cmd->add_option("--mode", vd_mode, "exact|mc[:trials]");
  drop_cmd->add_option("--gap-threshold", vd_gap_threshold,
                       "assert decrease for states at/above this gap");
  drop_cmd->add_option("--seed", vd_seed, "seed");
  drop_cmd->add_option("--out", vd_out, "output JSON (default stdout)");
  drop_cmd->add_flag("--assert", vd_assert, "exit 3 unless all such states decreased");

  // ---- fold ----
  auto* fold_cmd = app.add_subcommand("fold", "folded-process segmentation of a trace");
  std::string fold_trace, fold_out;
  int fold_j = 1;
  double fold_v = 2.0, fold_alpha2 = 0.5;
  bool fold_assert = false;
  fold_cmd->add_option("--trace", fold_trace, "trace.jsonl with full steps")->required();
  fold_cmd->add_option("--j", fold_j, "layer index (>= 1)");
  fold_cmd->add_option("--v", fold_v, "exploratory v");
  fold_cmd->add_option("--alpha2", fold_alpha2, "exploratory alpha2");
  fold_cmd->add_option("--out", fold_out, "output JSON (default stdout)");
  fold_cmd->add_flag("--assert", fold_assert, "exit 3 on violations or invalid partition");

  // ---- potentials ----
  auto* pot_cmd = app.add_subcommand("potentials", "evaluate potentials over a trace");
  std::string pot_trace, pot_layered, pot_out;
  double pot_alpha = 0.5;
  pot_cmd->add_option("--trace", pot_trace, "trace.jsonl with full steps")->required();
  pot_cmd->add_option("--alpha", pot_alpha, "Gamma smoothing");
  pot_cmd->add_option("--layered", pot_layered, "v=<f>,alpha2=<f>[,c=<f>] exploratory consts");
  pot_cmd->add_option("--out", pot_out, "output CSV")->required();

  // ---- c1 ----
  auto* c1_cmd = app.add_subcommand("c1", "Condition C1 prefix/suffix check");
  std::string c1_vector;
  double c1_delta = 0.25, c1_eps = 0.5;
  bool c1_assert = false;
  c1_cmd->add_option("--vector", c1_vector,
                     "file | twochoice:<n> | proxy:dist=<spec>;n=<int>;d=<int>[;mode=...]")
      ->required();
  c1_cmd->add_option("--delta", c1_delta, "quantile delta");
  c1_cmd->add_option("--eps", c1_eps, "bias epsilon");
  c1_cmd->add_flag("--assert", c1_assert, "exit 3 on failure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are validation errors
  }

  if (run_cmd->parsed()) {
    ExperimentConfig cfg = run_cfg;
    if (!run_config.empty()) {
      cfg = load_config(run_config);
      // explicit flags override file values
      for (const auto* opt : run_cmd->get_options()) {
        if (opt->count() == 0) continue;
        const std::string name = opt->get_name();
        if (name == "--process") cfg.process = run_cfg.process;
        else if (name == "--d") cfg.d = run_cfg.d;
        else if (name == "--beta") cfg.beta = run_cfg.beta;
        else if (name == "--dist") cfg.dist = run_cfg.dist;
        else if (name == "--weights") cfg.weights = run_cfg.weights;
        else if (name == "--n") cfg.n = run_cfg.n;
        else if (name == "--m") cfg.m = run_cfg.m;
        else if (name == "--trials") cfg.trials = run_cfg.trials;
        else if (name == "--seed") cfg.master_seed = run_cfg.master_seed;
        else if (name == "--full-trace") cfg.full_trace = run_cfg.full_trace;
      }
    }
    const RunPaths paths = run_experiment(cfg, run_out, run_force);
    std::cout << paths.dir.string() << '\n';
    return 0;
  }

  if (sweep_cmd->parsed()) {
    std::ifstream in(sweep_config);
    if (!in) throw ValidationError("cannot open sweep config: " + sweep_config);
    json j;
    in >> j;
    const SweepResult res = sweep(SweepConfig::from_json(j), sweep_out, sweep_force);
    std::cout << res.summary.string() << " (" << res.cells << " cells)\n";
    return 0;
  }

  if (report_cmd->parsed()) {
    report(rep_summary, rep_kind, rep_out);
    std::cout << rep_out << '\n';
    return 0;
  }

  if (alloc_cmd->parsed()) {
    const auto dist = parse_dist_spec(av_dist, av_n);
    RunProbMatrix rp;
    if (av_mode == "closed") {
      rp = weak_memory_run_probs_closed(dist, av_d);
    } else if (av_mode == "exact") {
      rp = exact_run_probs(dist, av_d);
    } else if (av_mode.rfind("mc", 0) == 0) {
      std::uint64_t trials = 1000000;
      if (av_mode.size() > 3 && av_mode[2] == ':') trials = std::stoull(av_mode.substr(3));
      Rng rng(av_seed);
      rp = mc_run_probs(dist, av_d, trials, rng).probs;
    } else {
      throw ValidationError("alloc-vector mode must be closed|exact|mc[:trials]");
    }
    const auto proxy = proxy_allocation_vector(rp);
    std::ostringstream os;
    os << "rank";
    for (std::uint32_t j = 0; j <= rp.d; ++j) os << ",p" << j;
    os << ",proxy\n";
    for (std::size_t i = 0; i < rp.n; ++i) {
      os << (i + 1);
      for (std::uint32_t j = 0; j <= rp.d; ++j) os << ',' << format_double(rp.p[i][j]);
      os << ',' << format_double(proxy.p[i]) << '\n';
    }
    write_text(av_out, os.str());
    return 0;
  }

  if (drop_cmd->parsed()) {
    const auto kind = parse_drop_process(vd_process);
    const auto dist = parse_dist_spec(vd_dist, vd_n);
    Rng rng(vd_seed);
    const auto states = parse_states(vd_states, dist.n(), rng);
    if (vd_gap_threshold < 0.0) {
      // default: the gapmin of a random: spec, else 0
      vd_gap_threshold = 0.0;
      const auto comma = vd_states.find(',');
      if (vd_states.rfind("random:", 0) == 0 && comma != std::string::npos)
        vd_gap_threshold = std::strtod(vd_states.c_str() + comma + 1, nullptr);
    }
    DropReport rep;
    if (vd_mode == "exact") {
      rep = verify_drop_exact(kind, dist, vd_alpha, vd_d, states, vd_gap_threshold);
    } else if (vd_mode.rfind("mc", 0) == 0) {
      std::uint64_t trials = 100000;
      if (vd_mode.size() > 3 && vd_mode[2] == ':') trials = std::stoull(vd_mode.substr(3));
      rep = verify_drop_mc(kind, dist, vd_alpha, vd_d, states, vd_gap_threshold, trials, rng);
    } else {
      throw ValidationError("verify-drop mode must be exact|mc[:trials]");
    }
    json out{{"process", vd_process},
             {"dist", vd_dist},
             {"alpha", vd_alpha},
             {"d", vd_d},
             {"mode", vd_mode},
             {"gap_threshold", vd_gap_threshold},
             {"c_min", rep.c_min},
             {"states_above_threshold", rep.num_above_threshold},
             {"decreased_above_threshold", rep.num_decreased_above_threshold},
             {"all_decreased_above_threshold", rep.all_decreased_above_threshold},
             {"mc_contradictions", rep.mc_contradictions}};
    json states_json = json::array();
    for (const auto& s : rep.states)
      states_json.push_back(json{{"gap", s.gap},
                                 {"gamma_before", s.gamma_before},
                                 {"expected_after", s.expected_after},
                                 {"stderr", s.stderr_after},
                                 {"decreased", s.decreased},
                                 {"c_min", s.c_min}});
    out["states"] = std::move(states_json);
    write_text(vd_out, out.dump(2) + "\n");
    if (vd_assert && !rep.all_decreased_above_threshold)
      throw AssertionFailure("drop assertion failed");
    return 0;
  }

  if (fold_cmd->parsed()) {
    const TraceFile tf = load_trace(fold_trace);
    const std::size_t n = tf.header["balloc"]["config"].value("n", 0u);
    const PotentialConfig cfg = exploratory_constants(fold_v, fold_alpha2, n);
    json trials_json = json::array();
    std::size_t total_violations = 0;
    bool all_valid = true;
    for (const auto& [trial, trace] : tf.trials) {
      const FoldedSegmentation seg = segment_folded(trace, fold_j, cfg);
      std::size_t case_a = 0, cond1 = 0, cond2 = 0, truncated = 0;
      for (const auto& r : seg.rounds) {
        switch (r.termination) {
          case FoldedSegmentation::Termination::CaseA: ++case_a; break;
          case FoldedSegmentation::Termination::Condition1: ++cond1; break;
          case FoldedSegmentation::Termination::Condition2: ++cond2; break;
          case FoldedSegmentation::Termination::TraceEnd: ++truncated; break;
        }
      }
      const bool valid =
          seg.valid_partition(trace.steps.front().t, trace.steps.back().t);
      all_valid = all_valid && valid;
      total_violations += seg.violations.size();
      trials_json.push_back(json{{"trial", trial},
                                 {"rounds", seg.rounds.size()},
                                 {"case_a", case_a},
                                 {"condition1", cond1},
                                 {"condition2", cond2},
                                 {"truncated", truncated},
                                 {"violations", seg.violations.size()},
                                 {"valid_partition", valid}});
    }
    json out{{"j", fold_j},
             {"v", fold_v},
             {"alpha2", fold_alpha2},
             {"mode", cfg.mode_name()},
             {"substeps_per_phase", static_cast<std::uint64_t>(std::ceil(fold_v / fold_alpha2 - 1e-9))},
             {"k_j", cfg.k(fold_j)},
             {"violations", total_violations},
             {"valid_partition", all_valid},
             {"trials", std::move(trials_json)}};
    write_text(fold_out, out.dump(2) + "\n");
    if (fold_assert && (total_violations > 0 || !all_valid))
      throw AssertionFailure("fold assertion failed");
    return 0;
  }

  if (pot_cmd->parsed()) {
    const TraceFile tf = load_trace(pot_trace);
    const std::size_t n = tf.header["balloc"]["config"].value("n", 0u);
    std::optional<PotentialConfig> layered;
    if (!pot_layered.empty()) {
      double v = 2.0, alpha2 = 0.5, c = 1.0;
      for (auto& part : [&] {
             std::vector<std::string> parts;
             std::stringstream ss(pot_layered);
             std::string p;
             while (std::getline(ss, p, ',')) parts.push_back(p);
             return parts;
           }()) {
        if (std::sscanf(part.c_str(), "v=%lf", &v) == 1) continue;
        if (std::sscanf(part.c_str(), "alpha2=%lf", &alpha2) == 1) continue;
        if (std::sscanf(part.c_str(), "c=%lf", &c) == 1) continue;
        throw ValidationError("bad --layered part: " + part);
      }
      layered = exploratory_constants(v, alpha2, n);
      layered->c = c;
    }
    const int j_hi = layered ? std::max(1, std::min(layered->j_max, 4)) : 0;
    std::ostringstream os;
    os << "trial,t,gap,gamma";
    for (int j = 0; layered && j <= j_hi; ++j)
      os << ",phi_" << j << ",psi_" << j << ",dot_phi_" << j << ",dot_psi_" << j;
    os << '\n';
    for (const auto& [trial, trace] : tf.trials) {
      if (trace.steps.empty())
        throw ValidationError("potentials needs a --full-trace trace to rebuild loads");
      std::vector<double> loads(n, 0.0);
      double total = 0.0;
      std::size_t snap_pos = 0;
      auto emit = [&](std::uint64_t t, double gap_val) {
        LoadVectorR lv{loads, total};
        const NormalizedLoads y = normalize(lv);
        os << trial << ',' << t << ',' << format_double(gap_val) << ','
           << format_double(gamma_potential(y, pot_alpha));
        for (int j = 0; layered && j <= j_hi; ++j)
          os << ',' << format_double(phi_j(y, j, *layered)) << ','
             << format_double(psi_j(y, j, *layered)) << ','
             << format_double(dot_phi_j(y, j, *layered)) << ','
             << format_double(dot_psi_j(y, j, *layered));
        os << '\n';
      };
      for (const auto& s : trace.steps) {
        loads[s.alloc] += s.weight;
        total += s.weight;
        while (snap_pos < trace.snapshots.size() && trace.snapshots[snap_pos].t == s.t) {
          emit(s.t, trace.snapshots[snap_pos].gap);
          ++snap_pos;
        }
      }
    }
    write_text(pot_out, os.str());
    return 0;
  }

  if (c1_cmd->parsed()) {
    const auto vec = parse_vector_spec(c1_vector);
    const C1Result res = c1_check(vec, c1_delta, c1_eps);
    if (res.pass) {
      std::cout << "PASS delta=" << format_double(c1_delta) << " eps=" << format_double(c1_eps)
                << '\n';
    } else {
      std::cout << "FAIL first violation: k=" << res.first_violation_k << " ("
                << res.violated_side << ")\n";
    }
    if (c1_assert && !res.pass) throw AssertionFailure("C1 assertion failed");
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const AssertionFailure& e) {
    std::cerr << "assertion failed: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
