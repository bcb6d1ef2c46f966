#include "balloc/harness.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "balloc/analysis.hpp"

namespace balloc {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

json ExperimentConfig::to_json() const {
  return json{{"process", process}, {"d", d},
              {"beta", beta},       {"dist", dist},
              {"weights", weights}, {"n", n},
              {"m", m},             {"trials", trials},
              {"master_seed", master_seed}, {"full_trace", full_trace}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.process = j.value("process", cfg.process);
  cfg.d = j.value("d", cfg.d);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.dist = j.value("dist", cfg.dist);
  cfg.weights = j.value("weights", cfg.weights);
  cfg.n = j.value("n", cfg.n);
  cfg.m = j.value("m", cfg.m);
  cfg.trials = j.value("trials", cfg.trials);
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  cfg.full_trace = j.value("full_trace", cfg.full_trace);
  return cfg;
}

ProcessKind ExperimentConfig::kind() const {
  if (process == "onechoice" || process == "twochoice" || process == "dchoice")
    return ProcessKind::DChoice;
  if (process == "memory") return ProcessKind::Memory;
  if (process == "weak-memory") return ProcessKind::WeakMemory;
  if (process == "reset-memory") return ProcessKind::ResetMemory;
  if (process == "one-plus-beta") return ProcessKind::OnePlusBeta;
  throw ValidationError("unknown process: " + process);
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ValidationError("config: trials must be >= 1");
  if (n < 1) throw ValidationError("config: n must be >= 1");
  kind();  // throws on unknown process
}

ProcessConfig ExperimentConfig::process_config() const {
  validate();
  ProcessConfig pc;
  pc.kind = kind();
  pc.d = process == "onechoice" ? 1 : process == "twochoice" ? 2 : d;
  pc.beta = beta;
  pc.dist = parse_dist_spec(dist, n);
  pc.weights = parse_weight_spec(weights);
  pc.n = n;
  pc.m = m;
  pc.full_trace = full_trace;
  pc.validate();
  return pc;
}

std::string ExperimentConfig::hash() const {
  const std::string s = to_json().dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

unsigned worker_threads() {
  if (const char* env = std::getenv("BALLOC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return std::min(std::max(hw, 1u), 8u);
}

namespace {

void parallel_for_trials(std::uint32_t trials, unsigned threads,
                         const std::function<void(std::uint32_t)>& fn) {
  if (threads <= 1 || trials <= 1) {
    for (std::uint32_t k = 0; k < trials; ++k) fn(k);
    return;
  }
  std::atomic<std::uint32_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    while (true) {
      const std::uint32_t k = next.fetch_add(1);
      if (k >= trials) return;
      try {
        fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = std::min<unsigned>(threads, trials);
  pool.reserve(count);
  for (unsigned i = 0; i < count; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json snap_to_json(std::uint32_t trial, const SnapshotRecord& s) {
  return json{{"kind", "snap"}, {"trial", trial}, {"t", s.t},
              {"gap", s.gap},   {"ymax", s.ymax}, {"ymin", s.ymin}};
}

json step_to_json(std::uint32_t trial, const StepRecord& s) {
  json j{{"kind", "step"}, {"trial", trial}, {"t", s.t},     {"sampled", s.sampled},
         {"alloc", s.alloc}, {"w", s.weight}, {"gap", s.gap}};
  if (s.cache_after.has_value())
    j["cache"] = *s.cache_after;
  else
    j["cache"] = nullptr;
  return j;
}

std::string axes_csv_prefix(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << csv_escape(cfg.process) << ',' << csv_escape(cfg.dist) << ','
     << csv_escape(cfg.weights) << ',' << cfg.n << ',' << cfg.m << ',' << cfg.d << ','
     << format_double(cfg.beta) << ',' << cfg.master_seed;
  return os.str();
}

constexpr char kSummaryHeader[] =
    "process,dist,weights,n,m,d,beta,master_seed,trial,final_gap,max_gap";
constexpr char kSnapshotsHeader[] =
    "process,dist,weights,n,m,d,beta,master_seed,trial,t,gap";

}  // namespace

RunPaths run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                        bool force, std::optional<unsigned> threads) {
  cfg.validate();
  const ProcessConfig pc = cfg.process_config();

  RunPaths paths;
  paths.dir = out_dir / ("run-" + cfg.hash());
  paths.meta = paths.dir / "meta.json";
  paths.trace = paths.dir / "trace.jsonl";
  paths.summary = paths.dir / "summary.csv";
  paths.snapshots = paths.dir / "snapshots.csv";
  const auto done_marker = paths.dir / ".done";

  if (!force && std::filesystem::exists(done_marker)) return paths;
  std::filesystem::create_directories(paths.dir);

  std::vector<Trace> traces(cfg.trials);
  parallel_for_trials(cfg.trials, threads.value_or(worker_threads()),
                      [&](std::uint32_t k) {
                        Rng rng(derive_trial_seed(cfg.master_seed, k));
                        traces[k] = run_process(pc, rng);
                      });

  {
    json meta{{"config", cfg.to_json()},
              {"tool_version", kToolVersion},
              {"rng", kRngId},
              {"seed_derivation", kSeedDerivationId},
              {"created", timestamp_utc()}};
    std::ofstream out(paths.meta);
    out << meta.dump(2) << '\n';
  }
  {
    std::ofstream out(paths.trace);
    json header{{"balloc", json{{"kind", "trace"},
                                {"version", kToolVersion},
                                {"rng", kRngId},
                                {"seed_derivation", kSeedDerivationId},
                                {"config", cfg.to_json()},
                                {"created", timestamp_utc()}}}};
    out << header.dump() << '\n';
    for (std::uint32_t k = 0; k < cfg.trials; ++k) {
      const Trace& tr = traces[k];
      std::size_t snap_pos = 0;
      for (const auto& step : tr.steps) {
        out << step_to_json(k, step).dump() << '\n';
        while (snap_pos < tr.snapshots.size() && tr.snapshots[snap_pos].t == step.t) {
          out << snap_to_json(k, tr.snapshots[snap_pos]).dump() << '\n';
          ++snap_pos;
        }
      }
      for (; snap_pos < tr.snapshots.size(); ++snap_pos)
        out << snap_to_json(k, tr.snapshots[snap_pos]).dump() << '\n';
    }
  }
  {
    std::ofstream out(paths.summary);
    out << kSummaryHeader << '\n';
    const std::string prefix = axes_csv_prefix(cfg);
    for (std::uint32_t k = 0; k < cfg.trials; ++k)
      out << prefix << ',' << k << ',' << format_double(traces[k].final_gap) << ','
          << format_double(traces[k].max_gap) << '\n';
  }
  {
    std::ofstream out(paths.snapshots);
    out << kSnapshotsHeader << '\n';
    const std::string prefix = axes_csv_prefix(cfg);
    for (std::uint32_t k = 0; k < cfg.trials; ++k)
      for (const auto& s : traces[k].snapshots)
        out << prefix << ',' << k << ',' << s.t << ',' << format_double(s.gap) << '\n';
  }
  std::ofstream(done_marker) << "ok\n";
  return paths;
}

SweepConfig SweepConfig::from_json(const json& j) {
  SweepConfig sc;
  if (!j.contains("base")) throw ValidationError("sweep config: missing \"base\"");
  sc.base = ExperimentConfig::from_json(j["base"]);
  if (j.contains("axes")) {
    if (!j["axes"].is_object()) throw ValidationError("sweep config: \"axes\" must be an object");
    for (const auto& [key, values] : j["axes"].items()) {
      if (!values.is_array()) throw ValidationError("sweep axis must be an array: " + key);
      sc.axes[key] = std::vector<json>(values.begin(), values.end());
    }
  }
  return sc;
}

std::vector<ExperimentConfig> SweepConfig::cells() const {
  static const std::vector<std::string> kAxisOrder = {"process", "dist", "a",      "b", "n",
                                                      "m",       "m_mult", "d",    "beta"};
  for (const auto& [key, _] : axes) {
    if (std::find(kAxisOrder.begin(), kAxisOrder.end(), key) == kAxisOrder.end())
      throw ValidationError("unknown sweep axis: " + key);
  }
  std::vector<std::pair<std::string, std::vector<json>>> dims;
  for (const auto& key : kAxisOrder) {
    auto it = axes.find(key);
    if (it != axes.end() && !it->second.empty()) dims.emplace_back(key, it->second);
  }
  std::vector<ExperimentConfig> out;
  std::vector<std::size_t> idx(dims.size(), 0);
  while (true) {
    ExperimentConfig cfg = base;
    std::optional<double> step_a, step_b;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      const auto& key = dims[k].first;
      const json& val = dims[k].second[idx[k]];
      if (key == "process") cfg.process = val.get<std::string>();
      else if (key == "dist") cfg.dist = val.get<std::string>();
      else if (key == "a") step_a = val.get<double>();
      else if (key == "b") step_b = val.get<double>();
      else if (key == "n") cfg.n = val.get<std::size_t>();
      else if (key == "m") cfg.m = val.get<std::uint64_t>();
      else if (key == "m_mult") cfg.m = val.get<std::uint64_t>() * cfg.n;
      else if (key == "d") cfg.d = val.get<std::uint32_t>();
      else if (key == "beta") cfg.beta = val.get<double>();
    }
    if (step_a || step_b) {
      double a = 2.0, b = 2.0;
      if (std::sscanf(cfg.dist.c_str(), "step:a=%lf,b=%lf", &a, &b) != 2)
        throw ValidationError("axes a/b require a step:* base dist");
      std::ostringstream os;
      os << "step:a=" << format_double(step_a.value_or(a)) << ",b="
         << format_double(step_b.value_or(b));
      cfg.dist = os.str();
    }
    out.push_back(std::move(cfg));
    std::size_t pos = dims.size();
    bool carry = true;
    while (pos > 0 && carry) {
      --pos;
      if (++idx[pos] < dims[pos].second.size()) carry = false;
      else idx[pos] = 0;
    }
    if (carry) break;
  }
  return out;
}

SweepResult sweep(const SweepConfig& cfg, const std::filesystem::path& out_dir, bool force) {
  const auto cells = cfg.cells();
  if (cells.size() > 10000 && !force)
    throw ValidationError("sweep grid has more than 1e4 cells; pass --force to proceed");
  std::filesystem::create_directories(out_dir);
  SweepResult res;
  res.cells = cells.size();
  res.summary = out_dir / "summary.csv";
  res.snapshots = out_dir / "snapshots.csv";
  std::ofstream sum(res.summary), snap(res.snapshots);
  sum << kSummaryHeader << '\n';
  snap << kSnapshotsHeader << '\n';
  auto append_body = [](std::ofstream& out, const std::filesystem::path& src) {
    std::ifstream in(src);
    std::string line;
    std::getline(in, line);  // drop header
    while (std::getline(in, line)) out << line << '\n';
  };
  for (const auto& cell : cells) {
    const RunPaths paths = run_experiment(cell, out_dir, false);
    append_body(sum, paths.summary);
    append_body(snap, paths.snapshots);
  }
  return res;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ValidationError("summary is missing column: " + name);
  }
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open summary: " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty summary: " + path.string());
  t.header = csv_split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(csv_split(line));
  }
  if (t.rows.empty()) throw ValidationError("summary has no data rows: " + path.string());
  return t;
}

double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t s = v.size();
  return (v[(s - 1) / 2] + v[s / 2]) / 2.0;
}

double quantile_of(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
  return v[idx];
}

}  // namespace

void report(const std::filesystem::path& summary_csv, const std::string& kind,
            const std::filesystem::path& out_csv) {
  const CsvTable t = read_csv(summary_csv);
  std::ofstream out(out_csv);
  if (kind == "gap-vs-n") {
    const std::size_t c_proc = t.col("process"), c_n = t.col("n"), c_gap = t.col("final_gap");
    std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> groups;
    for (const auto& r : t.rows)
      groups[{r[c_proc], std::stoull(r[c_n])}].push_back(std::stod(r[c_gap]));
    out << "process,n,trials,median_gap,q25,q75,log_n,loglog_n\n";
    for (auto& [key, gaps] : groups) {
      const double log_n = std::log(static_cast<double>(key.second));
      out << csv_escape(key.first) << ',' << key.second << ',' << gaps.size() << ','
          << format_double(median_of(gaps)) << ',' << format_double(quantile_of(gaps, 0.25))
          << ',' << format_double(quantile_of(gaps, 0.75)) << ',' << format_double(log_n) << ','
          << format_double(std::log(log_n)) << '\n';
    }
  } else if (kind == "gap-vs-m") {
    const std::size_t c_proc = t.col("process"), c_t = t.col("t"), c_gap = t.col("gap");
    std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> groups;
    for (const auto& r : t.rows)
      groups[{r[c_proc], std::stoull(r[c_t])}].push_back(std::stod(r[c_gap]));
    out << "process,t,trials,median_gap\n";
    for (auto& [key, gaps] : groups)
      out << csv_escape(key.first) << ',' << key.second << ',' << gaps.size() << ','
          << format_double(median_of(gaps)) << '\n';
  } else if (kind == "bias-dichotomy") {
    const std::size_t c_proc = t.col("process"), c_dist = t.col("dist"), c_t = t.col("t"),
                      c_gap = t.col("gap");
    std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<double>> groups;
    for (const auto& r : t.rows)
      groups[{r[c_proc], r[c_dist], std::stoull(r[c_t])}].push_back(std::stod(r[c_gap]));
    out << "process,dist,t,trials,median_gap\n";
    for (auto& [key, gaps] : groups)
      out << csv_escape(std::get<0>(key)) << ',' << csv_escape(std::get<1>(key)) << ','
          << std::get<2>(key) << ',' << gaps.size() << ',' << format_double(median_of(gaps))
          << '\n';
  } else {
    throw ValidationError("unknown report kind: " + kind);
  }
}

TraceFile load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trace: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trace file is empty");
  TraceFile tf;
  try {
    tf.header = json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad trace header: ") + e.what());
  }
  if (!tf.header.contains("balloc"))
    throw ValidationError("not a balloc trace (missing header)");
  const json cfg_json = tf.header["balloc"].value("config", json::object());
  const ExperimentConfig cfg = ExperimentConfig::from_json(cfg_json);

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("bad trace record: ") + e.what());
    }
    const auto trial = j.value("trial", 0u);
    Trace& tr = tf.trials[trial];
    tr.n = cfg.n;
    tr.m = cfg.m;
    tr.weighted = !cfg.weights.empty();
    const std::string kind = j.value("kind", "");
    if (kind == "step") {
      StepRecord s;
      s.t = j.at("t").get<std::uint64_t>();
      s.sampled = j.at("sampled").get<std::vector<std::uint32_t>>();
      s.alloc = j.at("alloc").get<std::uint32_t>();
      if (j.contains("cache") && !j["cache"].is_null())
        s.cache_after = j["cache"].get<std::uint32_t>();
      s.weight = j.value("w", 1.0);
      s.gap = j.value("gap", 0.0);
      tr.steps.push_back(std::move(s));
    } else if (kind == "snap") {
      SnapshotRecord s;
      s.t = j.at("t").get<std::uint64_t>();
      s.gap = j.at("gap").get<double>();
      s.ymax = j.value("ymax", s.gap);
      s.ymin = j.value("ymin", 0.0);
      tr.snapshots.push_back(s);
      tr.final_gap = s.gap;
      tr.max_gap = std::max(tr.max_gap, s.gap);
    } else {
      throw ValidationError("unknown trace record kind: " + kind);
    }
  }
  return tf;
}

}  // namespace balloc
