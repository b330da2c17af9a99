#pragma once

#include <string>

#include <json.hpp>

#include "nvqoc/ensemble.hpp"
#include "nvqoc/propagator.hpp"
#include "nvqoc/spin_system.hpp"

namespace nvqoc {

// One config file drives every subcommand; CLI flags are overrides layered
// on top. Unknown keys are rejected so typos fail loudly.
class AppConfig {
 public:
  static nlohmann::json defaults();
  static AppConfig builtin();
  static AppConfig from_file(const std::string& path);
  static AppConfig from_json(const nlohmann::json& file_values);

  // "dotted.path=value"; the path must already exist in the merged tree.
  void set_override(const std::string& key_eq_value);
  void set_profile(const std::string& profile);  // fast | standard | verify

  const nlohmann::json& tree() const { return root_; }
  std::uint64_t hash() const { return fnv1a64(root_.dump()); }

  std::uint64_t seed() const;
  SpinSystem system() const;
  OptimizerOptions optimizer_options() const;
  Tolerances analysis_tolerance() const;
  double ramp_fraction() const;

  ScanConfig scan_config(const std::string& out_dir, int jobs) const;

  const nlohmann::json& section(const std::string& name) const;

 private:
  nlohmann::json root_;
};

}  // namespace nvqoc
