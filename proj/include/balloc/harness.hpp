#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "balloc/processes.hpp"

namespace balloc {

inline constexpr char kToolVersion[] = "0.1.0";

/// A single experiment: process, sampling distribution, scale, trials and
/// seeding. Round-trips losslessly through JSON.
struct ExperimentConfig {
  std::string process = "onechoice";  // onechoice|twochoice|dchoice|memory|
                                      // weak-memory|reset-memory|one-plus-beta
  std::uint32_t d = 2;
  double beta = 0.5;
  std::string dist = "uniform";
  std::string weights;  // empty = unit balls without weight draws
  std::size_t n = 1;
  std::uint64_t m = 0;
  std::uint32_t trials = 1;
  std::uint64_t master_seed = 1;
  bool full_trace = false;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate() const;

  ProcessKind kind() const;
  ProcessConfig process_config() const;

  /// FNV-1a over the canonical JSON dump; names the run directory.
  std::string hash() const;
};

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path meta;
  std::filesystem::path trace;
  std::filesystem::path summary;
  std::filesystem::path snapshots;
};

/// Worker pool size: BALLOC_THREADS when set, else min(hardware, 8).
unsigned worker_threads();

/// Runs all trials (parallel across trials, output ordered by trial index)
/// and writes meta.json, trace.jsonl, summary.csv and snapshots.csv under
/// out_dir/run-<hash>. A completed run directory (".done" marker) is reused
/// unless force is set. JSONL bodies are byte-stable across reruns and
/// thread counts; timestamps live only in headers.
RunPaths run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                        bool force = false, std::optional<unsigned> threads = std::nullopt);

/// Axes for a Cartesian sweep over a base config.
struct SweepConfig {
  ExperimentConfig base;
  // recognized axes: process, n, m, m_mult, d, beta, dist, a, b
  std::map<std::string, std::vector<nlohmann::json>> axes;

  static SweepConfig from_json(const nlohmann::json& j);
  std::vector<ExperimentConfig> cells() const;
};

struct SweepResult {
  std::filesystem::path summary;
  std::filesystem::path snapshots;
  std::size_t cells = 0;
};

/// Runs every cell (reusing completed ones) and merges the per-cell CSVs.
/// Grids over 1e4 cells require force.
SweepResult sweep(const SweepConfig& cfg, const std::filesystem::path& out_dir,
                  bool force = false);

/// Plot-ready aggregations of summary/snapshot CSVs:
///   gap-vs-n       median/quartiles of final gap per (process, n), with
///                  log n and log log n reference columns (natural logs)
///   gap-vs-m       median gap per (process, t) from a snapshots CSV
///   bias-dichotomy median gap per (process, dist, t) from a snapshots CSV
void report(const std::filesystem::path& summary_csv, const std::string& kind,
            const std::filesystem::path& out_csv);

/// In-memory form of a trace file: header plus per-trial traces.
struct TraceFile {
  nlohmann::json header;
  std::map<std::uint32_t, Trace> trials;
};

TraceFile load_trace(const std::filesystem::path& path);

/// Minimal RFC-4180 CSV helpers (quotes fields containing commas/quotes).
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split(const std::string& line);

/// Shortest round-trip decimal for a double (via std::to_chars).
std::string format_double(double v);

}  // namespace balloc
