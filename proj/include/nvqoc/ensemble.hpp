#pragma once

#include <atomic>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvqoc/optimizer.hpp"
#include "nvqoc/spin_system.hpp"

namespace nvqoc {

struct ScanConfig {
  std::vector<double> durations_ns;
  std::vector<int> basis_counts;
  int restarts = 8;
  OptimizerOptions opts;
  nlohmann::json system_config;
  std::string out_dir;
  int jobs = 1;
  std::uint64_t global_seed = 0;

  // Everything that determines the record set (not jobs / out_dir).
  std::uint64_t config_hash() const;
  void validate() const;
};

struct ScanCell {
  double T = 0.0;
  int n_basis = 0;
  std::string status = "pending";  // pending | done | failed
  int n_records = 0;

  std::string key() const;
};

struct ScanManifest {
  std::uint64_t config_hash = 0;
  std::vector<ScanCell> cells;
  bool interrupted = false;  // transient, not persisted

  nlohmann::json to_json() const;
  static ScanManifest from_json(const nlohmann::json& j);
  void save(const std::string& path) const;  // atomic: tmp + rename
  static ScanManifest load(const std::string& path);

  const ScanCell* find(double T, int n_basis) const;
  bool all_done() const;
};

// Line-delimited record store (one JSON record per line, append-only).
std::vector<OptimizationRecord> load_records(const std::string& path);
void append_records(const std::string& path,
                    const std::vector<OptimizationRecord>& records);

// Runs every pending cell of the (durations x basis_counts) grid and
// persists records + manifest under config.out_dir. Finished cells are
// skipped on resume, so an interrupted scan re-run with the same config
// produces the identical store. Set `interrupt` to stop cooperatively;
// partially computed cells are discarded and stay pending.
ScanManifest run_scan(const ScanConfig& config,
                      const std::atomic<bool>* interrupt = nullptr,
                      std::ostream* log = nullptr);

struct CellBest {
  double T;
  int n_basis;
  std::size_t record_index;  // line index in the store
};

// Per-cell argmin by infidelity (amplitude tiebreak); cells ordered by
// first appearance in the store. Empty cells simply do not appear.
std::vector<CellBest> best_per_cell(const std::vector<OptimizationRecord>& records);

// Flat tables, delimiter-separated with one header row. `provenance` lines
// are written as leading '#' comments.
void write_records_table(std::ostream& os,
                         const std::vector<OptimizationRecord>& records,
                         const std::vector<std::string>& provenance);
void write_components_table(std::ostream& os,
                            const std::vector<OptimizationRecord>& records,
                            const std::vector<CellBest>& best,
                            const std::vector<std::string>& provenance);

}  // namespace nvqoc
