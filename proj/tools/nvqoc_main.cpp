#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "nvqoc/analysis.hpp"
#include "nvqoc/app_config.hpp"
#include "nvqoc/ensemble.hpp"
#include "nvqoc/objective.hpp"

namespace fs = std::filesystem;
using namespace nvqoc;

namespace {

std::atomic<bool> g_interrupt{false};

void handle_sigint(int) { g_interrupt.store(true); }

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::string store_path;  // defaults to <out>/records.jsonl
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool fast = false;
  bool verify = false;
  std::optional<long> record_index;
  int verbosity = 0;
};

AppConfig load_config(const CliOptions& cli) {
  AppConfig cfg = cli.config_path.empty() ? AppConfig::builtin()
                                          : AppConfig::from_file(cli.config_path);
  if (cli.fast && cli.verify)
    throw ConfigError("--fast and --verify are mutually exclusive");
  if (cli.fast) cfg.set_profile("fast");
  if (cli.verify) cfg.set_profile("verify");
  for (const auto& kv : cli.overrides) cfg.set_override(kv);
  if (cli.seed) cfg.set_override("seed=" + std::to_string(*cli.seed));
  return cfg;
}

std::vector<std::string> provenance(const AppConfig& cfg, const std::string& what) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(cfg.hash()));
  return {std::string(version_string), "subcommand=" + what,
          "config_hash=" + std::string(hash),
          "seed=" + std::to_string(cfg.seed())};
}

std::ofstream open_artifact(const std::string& dir, const std::string& name,
                            const std::vector<std::string>& header) {
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / name).string();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (const auto& line : header) os << "# " << line << '\n';
  return os;
}

std::string default_store(const CliOptions& cli) {
  return cli.store_path.empty()
             ? (fs::path(cli.out_dir) / "records.jsonl").string()
             : cli.store_path;
}

struct SelectedRecord {
  OptimizationRecord record;
  std::size_t store_index = 0;

  // artifact names embed the cell and the store line, e.g. "_T0.2_N10_r3"
  std::string tag() const {
    std::ostringstream os;
    os << "_T" << record.T << "_N" << record.n_basis << "_r" << store_index;
    return os.str();
  }
};

// Pick the record the derived-data commands operate on: explicit index, or
// the best record of the configured (T, N) cell.
SelectedRecord select_record(const std::string& store_path,
                             const nlohmann::json& section,
                             const std::optional<long>& index) {
  const auto records = load_records(store_path);
  if (records.empty())
    throw std::runtime_error("empty store: " + store_path +
                             " (run `optimize` or `scan` first)");
  if (index) {
    if (*index < 0 || *index >= long(records.size()))
      throw std::runtime_error("--record-index out of range (store has " +
                               std::to_string(records.size()) + " records)");
    return {records[std::size_t(*index)], std::size_t(*index)};
  }
  const double T = section.at("T_ns").get<double>();
  const int N = section.at("N").get<int>();
  std::vector<OptimizationRecord> cell;
  std::vector<std::size_t> cell_index;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].T == T && records[i].n_basis == N) {
      cell.push_back(records[i]);
      cell_index.push_back(i);
    }
  if (cell.empty())
    throw std::runtime_error("store has no records for T=" + std::to_string(T) +
                             " ns, N=" + std::to_string(N) +
                             "; pass --record-index or adjust the config");
  const std::size_t best = pick_best(cell);
  return {cell[best], cell_index[best]};
}

Vec initial_state_by_label(const SpinSystem& sys, const std::string& label) {
  Vec psi = Vec::Zero(sys.dimension());
  if (label == "0")
    psi(sys.polarized_index(1)) = 1.0;
  else if (label == "-1")
    psi(sys.polarized_index(2)) = 1.0;
  else if (label == "+1")
    psi(sys.polarized_index(0)) = 1.0;
  else if (label == "+")
    psi = sensing_plus_state(sys);
  else
    throw ConfigError("trajectory.initial_state must be one of 0, -1, +1, +");
  return psi;
}

void write_psd_table(std::ostream& os, const SpectrumResult& s) {
  os.precision(17);
  os << "freq_GHz, psd_G2_per_GHz\n";
  for (std::size_t i = 0; i < s.freq_ghz.size(); ++i)
    os << s.freq_ghz[i] << ", " << s.psd[i] << '\n';
}

int cmd_optimize(const CliOptions& cli, const AppConfig& cfg) {
  const auto& sec = cfg.section("optimize");
  ScanConfig sc = cfg.scan_config(cli.out_dir, cli.jobs);
  sc.durations_ns = {sec.at("T_ns").get<double>()};
  sc.basis_counts = {sec.at("N").get<int>()};
  sc.restarts = sec.at("restarts").get<int>();

  const ScanManifest manifest =
      run_scan(sc, &g_interrupt, cli.verbosity > 0 ? &std::cerr : nullptr);
  if (manifest.interrupted) return 130;

  const auto records = load_records((fs::path(cli.out_dir) / "records.jsonl").string());
  const auto best_cells = best_per_cell(records);
  if (best_cells.empty()) throw std::runtime_error("optimization produced no records");
  const OptimizationRecord& best = records[best_cells.front().record_index];

  const auto prov = provenance(cfg, "optimize");
  {
    auto os = open_artifact(cli.out_dir, "best_record.json", prov);
    os << best.to_json().dump(2) << '\n';
  }
  const SelectedRecord sel{best, best_cells.front().record_index};
  const Envelope env = Envelope::for_duration(best.T, cfg.ramp_fraction());
  const PulseParams params(best.alpha);
  const int n_samples = cfg.section("psd").at("samples").get<int>();
  {
    auto os = open_artifact(cli.out_dir, "pulse" + sel.tag() + ".tsv", prov);
    write_waveform(os, params, env, n_samples);
  }
  {
    const auto wf = sample_waveform(params, env, n_samples);
    const double rate = (n_samples - 1) / best.T;
    auto os = open_artifact(cli.out_dir, "psd" + sel.tag() + ".tsv", prov);
    write_psd_table(os, psd(wf, rate, cfg.section("psd").at("zero_pad").get<int>()));
  }
  std::cout << "best infidelity " << best.infidelity << " (seed " << best.seed
            << ", " << best.iterations << " iterations, " << best.termination
            << "), max amplitude " << best.max_amp_gauss << " G\n";
  return 0;
}

int cmd_scan(const CliOptions& cli, const AppConfig& cfg) {
  const ScanConfig sc = cfg.scan_config(cli.out_dir, cli.jobs);
  const ScanManifest manifest =
      run_scan(sc, &g_interrupt, cli.verbosity > 0 ? &std::cerr : nullptr);

  const auto records = load_records((fs::path(cli.out_dir) / "records.jsonl").string());
  if (!records.empty()) {
    const auto best = best_per_cell(records);
    std::vector<OptimizationRecord> best_records;
    for (const auto& b : best) best_records.push_back(records[b.record_index]);
    auto prov = provenance(cfg, "scan");
    for (const auto& c : manifest.cells)
      if (c.status != "done")
        prov.push_back("warning: cell " + c.key() + " has no records (" +
                       c.status + ")");
    {
      auto os = open_artifact(cli.out_dir, "best_per_cell.tsv", prov);
      write_records_table(os, best_records, {});
    }
    {
      auto os = open_artifact(cli.out_dir, "components.tsv", prov);
      write_components_table(os, records, best, {});
    }
  }
  if (manifest.interrupted) {
    std::cerr << "scan interrupted; resume with the same config and --out\n";
    return 130;
  }
  for (const auto& c : manifest.cells)
    if (c.status == "failed") return 1;
  return 0;
}

int cmd_export(const CliOptions& cli, const AppConfig& cfg) {
  const auto records = load_records(default_store(cli));
  if (records.empty())
    throw std::runtime_error("empty store: " + default_store(cli));
  const auto best = best_per_cell(records);
  std::vector<OptimizationRecord> best_records;
  for (const auto& b : best) best_records.push_back(records[b.record_index]);
  const auto prov = provenance(cfg, "export");
  {
    auto os = open_artifact(cli.out_dir, "best_per_cell.tsv", prov);
    write_records_table(os, best_records, {});
  }
  {
    auto os = open_artifact(cli.out_dir, "records_table.tsv", prov);
    write_records_table(os, records, {});
  }
  {
    auto os = open_artifact(cli.out_dir, "components.tsv", prov);
    write_components_table(os, records, best, {});
  }
  return 0;
}

int cmd_trajectory(const CliOptions& cli, const AppConfig& cfg) {
  const auto& sec = cfg.section("trajectory");
  const SelectedRecord sel =
      select_record(default_store(cli), sec, cli.record_index);
  const OptimizationRecord& rec = sel.record;
  const SpinSystem sys = cfg.system();

  PropagationRequest req;
  req.system = &sys;
  req.params = PulseParams(rec.alpha);
  req.env = Envelope::for_duration(rec.T, cfg.ramp_fraction());
  req.T = rec.T;
  req.tol = cfg.analysis_tolerance();
  req.initial_state = initial_state_by_label(sys, sec.at("initial_state").get<std::string>());
  const int samples = sec.at("samples").get<int>();
  req.trajectory_times.resize(std::size_t(samples));
  for (int i = 0; i < samples; ++i)
    req.trajectory_times[std::size_t(i)] = rec.T * i / (samples - 1);

  const PropagationResult res = sample_trajectory(req);

  // drop states that never rise above the population floor
  const double floor = sec.at("population_floor").get<double>();
  std::vector<int> keep;
  for (int k = 0; k < sys.dimension(); ++k) {
    double peak = 0.0;
    for (const auto& s : res.trajectory) peak = std::max(peak, s.populations(k));
    if (peak >= floor) keep.push_back(k);
  }

  auto os = open_artifact(cli.out_dir, "trajectory" + sel.tag() + ".tsv",
                          provenance(cfg, "trajectory"));
  os.precision(17);
  os << "t_ns";
  for (int k : keep) os << ", " << sys.basis_label(k);
  os << '\n';
  for (const auto& s : res.trajectory) {
    os << s.t;
    for (int k : keep) os << ", " << s.populations(k);
    os << '\n';
  }
  std::cout << "trajectory for T=" << rec.T << " ns (record seed " << rec.seed
            << "), " << keep.size() << "/" << sys.dimension()
            << " states above floor\n";
  return 0;
}

int cmd_multipulse(const CliOptions& cli, const AppConfig& cfg) {
  const auto& sec = cfg.section("multipulse");
  const SelectedRecord sel =
      select_record(default_store(cli), sec, cli.record_index);
  const OptimizationRecord& rec = sel.record;
  const SpinSystem sys = cfg.system();

  PropagationRequest req;
  req.system = &sys;
  req.params = PulseParams(rec.alpha);
  req.env = Envelope::for_duration(rec.T, cfg.ramp_fraction());
  req.T = rec.T;
  req.tol = cfg.analysis_tolerance();
  const Mat u_lab = propagate(req).u_final;
  // iterate the rotating-frame pulse unitary so an ideal pair composes to I
  const Mat u_rot = FrameCorrection(sys, rec.T).apply(u_lab);

  const Vec plus = sensing_plus_state(sys);
  const long n_max = sec.at("n_max").get<long>();
  const MultipulseTrace trace = multipulse_trace(u_rot, plus, plus, n_max);

  auto os = open_artifact(cli.out_dir, "multipulse" + sel.tag() + ".tsv",
                          provenance(cfg, "multipulse"));
  os.precision(17);
  os << "pulses, population\n";
  for (std::size_t i = 0; i < trace.counts.size(); ++i)
    os << trace.counts[i] << ", " << trace.population[i] << '\n';
  std::cout << "multipulse trace for T=" << rec.T << " ns over " << n_max
            << " pulses; final population "
            << (trace.population.empty() ? 0.0 : trace.population.back()) << '\n';
  return 0;
}

int cmd_psd(const CliOptions& cli, const AppConfig& cfg) {
  const auto& sec = cfg.section("psd");
  const SelectedRecord sel =
      select_record(default_store(cli), sec, cli.record_index);
  const OptimizationRecord& rec = sel.record;
  const SpinSystem sys = cfg.system();
  const auto prov = provenance(cfg, "psd");

  const Envelope env = Envelope::for_duration(rec.T, cfg.ramp_fraction());
  const PulseParams params(rec.alpha);
  const int n_samples = sec.at("samples").get<int>();
  const int zero_pad = sec.at("zero_pad").get<int>();
  const double rate = (n_samples - 1) / rec.T;

  {
    auto os = open_artifact(cli.out_dir, "pulse" + sel.tag() + ".tsv", prov);
    write_waveform(os, params, env, n_samples);
  }
  {
    const auto wf = sample_waveform(params, env, n_samples);
    auto os = open_artifact(cli.out_dir, "psd" + sel.tag() + ".tsv", prov);
    write_psd_table(os, psd(wf, rate, zero_pad));
  }
  {
    const GaussianPiReference ref = gaussian_pi_reference(rec.T, sys, n_samples);
    auto os =
        open_artifact(cli.out_dir, "psd_gaussian_ref" + sel.tag() + ".tsv", prov);
    write_psd_table(os, psd(ref.bx, rate, zero_pad));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, handle_sigint);

  CLI::App app{"NV-center pi-pulse optimization and analysis"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  CliOptions cli;
  if (const char* env = std::getenv("NVQOC_CONFIG")) cli.config_path = env;
  app.add_option("--config", cli.config_path, "Config file (JSON)")
      ->envname("NVQOC_CONFIG");
  app.add_option("--out", cli.out_dir, "Output directory (default: out)");
  app.add_option("--jobs", cli.jobs, "Concurrent restarts (default: 1)");
  std::uint64_t seed_flag = 0;
  auto* seed_opt = app.add_option("--seed", seed_flag, "Override config seed");
  app.add_option("--set", cli.overrides,
                 "Override a config key, e.g. --set optimize.T_ns=1.0")
      ->take_all();
  app.add_flag("--fast", cli.fast, "Fast tolerance profile");
  app.add_flag("--verify", cli.verify, "High-accuracy tolerance profile");
  app.add_flag("-v,--verbose", [&cli](std::int64_t n) { cli.verbosity = int(n); },
               "Verbose progress output");

  auto* c_opt = app.add_subcommand("optimize", "Multistart optimization of one (T, N) cell");
  auto* c_scan = app.add_subcommand("scan", "Run the (T, N) ensemble grid");
  auto* c_traj = app.add_subcommand("trajectory", "Population dynamics of a record");
  auto* c_multi = app.add_subcommand("multipulse", "Repeated-inversion population trace");
  auto* c_psd = app.add_subcommand("psd", "Waveform and power spectral density");
  auto* c_export = app.add_subcommand("export", "Re-derive tables from a record store");
  for (auto* sc : {c_traj, c_multi, c_psd, c_export})
    sc->add_option("--store", cli.store_path, "Record store (default: <out>/records.jsonl)");
  long record_index = -1;
  for (auto* sc : {c_traj, c_multi, c_psd})
    sc->add_option("--record-index", record_index, "Use a specific store line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (seed_opt->count() > 0) cli.seed = seed_flag;
    if (record_index >= 0) cli.record_index = record_index;
    const AppConfig cfg = load_config(cli);

    if (c_opt->parsed()) return cmd_optimize(cli, cfg);
    if (c_scan->parsed()) return cmd_scan(cli, cfg);
    if (c_traj->parsed()) return cmd_trajectory(cli, cfg);
    if (c_multi->parsed()) return cmd_multipulse(cli, cfg);
    if (c_psd->parsed()) return cmd_psd(cli, cfg);
    if (c_export->parsed()) return cmd_export(cli, cfg);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: {\"kind\":\"config\",\"message\":\"" << e.what() << "\"}\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: {\"kind\":\"runtime\",\"message\":\"" << e.what() << "\"}\n";
    return 1;
  }
}
