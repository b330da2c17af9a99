#include "nvqoc/ensemble.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace nvqoc {

namespace fs = std::filesystem;
using nlohmann::json;

void ScanConfig::validate() const {
  if (durations_ns.empty() || basis_counts.empty())
    throw ConfigError("scan: durations and basis_counts must be non-empty");
  for (double t : durations_ns)
    if (!(t > 0.0)) throw ConfigError("scan: durations must be positive");
  for (int n : basis_counts)
    if (n < 1) throw ConfigError("scan: basis counts must be >= 1");
  if (restarts < 1) throw ConfigError("scan: restarts must be >= 1");
  if (out_dir.empty()) throw ConfigError("scan: output directory not set");
}

std::uint64_t ScanConfig::config_hash() const {
  json j;
  j["durations_ns"] = durations_ns;
  j["basis_counts"] = basis_counts;
  j["restarts"] = restarts;
  j["global_seed"] = global_seed;
  j["system"] = system_config;
  j["optimizer"] = {
      {"max_iterations", opts.core.max_iterations},
      {"grad_inf_tol", opts.core.grad_inf_tol},
      {"rel_obj_tol", opts.core.rel_obj_tol},
      {"memory", opts.core.memory},
      {"armijo_c", opts.core.armijo_c},
      {"shrink", opts.core.shrink},
      {"max_backtracks", opts.core.max_backtracks},
      {"amp_max_gauss", opts.bounds.amp_max_gauss},
      {"freq_max_rad_ns", opts.bounds.freq_max_rad_ns},
      {"fast_tol", {opts.fast_tol.abs, opts.fast_tol.rel}},
      {"verify_tol", {opts.verify_tol.abs, opts.verify_tol.rel}},
      {"frame_correction", opts.frame_correction},
      {"ramp_fraction", opts.ramp_fraction},
  };
  return fnv1a64(j.dump());
}

std::string ScanCell::key() const {
  std::ostringstream os;
  os << "T=" << T << ",N=" << n_basis;
  return os.str();
}

json ScanManifest::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["cells"] = json::array();
  for (const auto& c : cells)
    j["cells"].push_back({{"T_ns", c.T},
                          {"N", c.n_basis},
                          {"status", c.status},
                          {"n_records", c.n_records}});
  return j;
}

ScanManifest ScanManifest::from_json(const json& j) {
  ScanManifest m;
  m.config_hash = j.at("config_hash").get<std::uint64_t>();
  for (const auto& jc : j.at("cells")) {
    ScanCell c;
    c.T = jc.at("T_ns").get<double>();
    c.n_basis = jc.at("N").get<int>();
    c.status = jc.at("status").get<std::string>();
    c.n_records = jc.at("n_records").get<int>();
    m.cells.push_back(std::move(c));
  }
  return m;
}

void ScanManifest::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("manifest: cannot write " + tmp);
    os << to_json().dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

ScanManifest ScanManifest::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot read " + path);
  json j;
  is >> j;
  return from_json(j);
}

const ScanCell* ScanManifest::find(double T, int n_basis) const {
  for (const auto& c : cells)
    if (c.T == T && c.n_basis == n_basis) return &c;
  return nullptr;
}

bool ScanManifest::all_done() const {
  for (const auto& c : cells)
    if (c.status != "done") return false;
  return true;
}

std::vector<OptimizationRecord> load_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) return {};
  std::vector<OptimizationRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(OptimizationRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("record store " + path + ":" +
                               std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

void append_records(const std::string& path,
                    const std::vector<OptimizationRecord>& records) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("record store: cannot append to " + path);
  for (const auto& r : records) os << r.to_json().dump() << '\n';
  os.flush();
  if (!os) throw std::runtime_error("record store: write failed for " + path);
}

namespace {

// Drop records of cells that are not marked done (a crash between record
// append and manifest update would otherwise duplicate them on resume).
void compact_store(const std::string& store_path, const ScanManifest& manifest) {
  auto records = load_records(store_path);
  std::vector<OptimizationRecord> keep;
  for (const auto& r : records) {
    const ScanCell* c = manifest.find(r.T, r.n_basis);
    if (c && c->status == "done") keep.push_back(r);
  }
  if (keep.size() == records.size()) return;
  const std::string tmp = store_path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("record store: cannot write " + tmp);
    for (const auto& r : keep) os << r.to_json().dump() << '\n';
  }
  fs::rename(tmp, store_path);
}

}  // namespace

ScanManifest run_scan(const ScanConfig& config, const std::atomic<bool>* interrupt,
                      std::ostream* log) {
  config.validate();
  fs::create_directories(config.out_dir);
  const std::string store_path = (fs::path(config.out_dir) / "records.jsonl").string();
  const std::string manifest_path =
      (fs::path(config.out_dir) / "manifest.json").string();

  // fail before any compute if the store is unwritable
  {
    std::ofstream probe(store_path, std::ios::app);
    if (!probe)
      throw std::runtime_error("scan: output store is not writable: " + store_path);
  }

  const std::uint64_t hash = config.config_hash();
  ScanManifest manifest;
  if (fs::exists(manifest_path)) {
    manifest = ScanManifest::load(manifest_path);
    if (manifest.config_hash != hash)
      throw ConfigError(
          "scan: existing manifest was produced by a different config; "
          "use a fresh output directory or restore the original config");
    compact_store(store_path, manifest);
  } else {
    manifest.config_hash = hash;
    for (double t : config.durations_ns)
      for (int n : config.basis_counts) {
        ScanCell c;
        c.T = t;
        c.n_basis = n;
        manifest.cells.push_back(std::move(c));
      }
    manifest.save(manifest_path);
  }

  const SpinSystem system = SpinSystem::from_config(config.system_config);

  OptimizerOptions opts = config.opts;
  if (interrupt)
    opts.core.should_stop = [interrupt]() { return interrupt->load(); };

  for (auto& cell : manifest.cells) {
    if (cell.status == "done") continue;
    if (interrupt && interrupt->load()) {
      manifest.interrupted = true;
      break;
    }
    if (log)
      (*log) << "[scan] cell " << cell.key() << " (" << config.restarts
             << " restarts)\n"
             << std::flush;
    ControlProblem problem{&system, cell.T, cell.n_basis};
    try {
      const MultistartResult ms = multistart(problem, opts, config.restarts,
                                             config.global_seed, config.jobs);
      append_records(store_path, ms.records);
      cell.status = "done";
      cell.n_records = int(ms.records.size());
      manifest.save(manifest_path);
      if (log)
        (*log) << "[scan] cell " << cell.key()
               << " done, best infidelity " << ms.best().infidelity << "\n"
               << std::flush;
    } catch (const lbfgs::Interrupted&) {
      manifest.interrupted = true;
      break;
    } catch (const std::exception& e) {
      cell.status = "failed";
      cell.n_records = 0;
      manifest.save(manifest_path);
      if (log) (*log) << "[scan] cell " << cell.key() << " failed: " << e.what()
                      << "\n";
    }
  }
  return manifest;
}

std::vector<CellBest> best_per_cell(const std::vector<OptimizationRecord>& records) {
  std::vector<CellBest> order;
  std::map<std::pair<double, int>, std::size_t> index;  // cell -> order slot
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto key = std::make_pair(records[i].T, records[i].n_basis);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, order.size());
      order.push_back({records[i].T, records[i].n_basis, i});
      continue;
    }
    const OptimizationRecord& cur = records[order[it->second].record_index];
    const OptimizationRecord& cand = records[i];
    if (cand.infidelity < cur.infidelity ||
        (cand.infidelity == cur.infidelity &&
         cand.max_amp_gauss < cur.max_amp_gauss))
      order[it->second].record_index = i;
  }
  return order;
}

namespace {

void write_provenance(std::ostream& os, const std::vector<std::string>& lines) {
  for (const auto& l : lines) os << "# " << l << '\n';
}

void write_record_row(std::ostream& os, const OptimizationRecord& r) {
  os << r.T << ", " << r.n_basis << ", " << r.seed << ", " << r.infidelity
     << ", " << r.max_amp_gauss << ", " << r.termination;
  for (double a : r.alpha) os << ", " << a;
  os << '\n';
}

}  // namespace

void write_records_table(std::ostream& os,
                         const std::vector<OptimizationRecord>& records,
                         const std::vector<std::string>& provenance) {
  write_provenance(os, provenance);
  os.precision(17);
  os << "T_ns, N, seed, infidelity, max_amp_G, termination, alpha...\n";
  for (const auto& r : records) write_record_row(os, r);
}

void write_components_table(std::ostream& os,
                            const std::vector<OptimizationRecord>& records,
                            const std::vector<CellBest>& best,
                            const std::vector<std::string>& provenance) {
  std::vector<bool> is_best(records.size(), false);
  for (const auto& b : best) is_best[b.record_index] = true;
  write_provenance(os, provenance);
  os.precision(17);
  os << "T_ns, N, record, best, component, a_G, omega_rad_ns\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    for (int c = 0; c < r.n_basis; ++c)
      os << r.T << ", " << r.n_basis << ", " << i << ", " << (is_best[i] ? 1 : 0)
         << ", " << c << ", " << r.alpha[std::size_t(3 * c)] << ", "
         << r.alpha[std::size_t(3 * c + 1)] << '\n';
  }
}

}  // namespace nvqoc
