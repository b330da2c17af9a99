#include "nvqoc/app_config.hpp"

#include <fstream>

namespace nvqoc {

using nlohmann::json;

json AppConfig::defaults() {
  json j;
  j["seed"] = 20240901;
  j["system"] = SpinSystem::default_config();
  j["envelope"] = {{"ramp_fraction", 0.3}};
  j["tolerances"] = {{"profile", "standard"},
                     {"fast", 1e-8},
                     {"standard", 1e-10},
                     {"verify", 1e-12}};
  j["optimizer"] = {{"max_iterations", 1000},
                    {"grad_inf_tol", 1e-9},
                    {"rel_obj_tol", 1e-8},
                    {"memory", 10},
                    {"armijo_c", 1e-4},
                    {"backtrack_shrink", 0.5},
                    {"max_backtracks", 40},
                    {"amp_bound_gauss", 2000.0},
                    {"freq_bound_ghz", 20.0},
                    {"frame_correction", true}};
  j["optimize"] = {{"T_ns", 5.0}, {"N", 10}, {"restarts", 8}};
  // desk-scale grid; configs/scan_full.json holds the long-running one
  j["scan"] = {{"durations_ns", {0.2, 1.0, 5.0}},
               {"basis_counts", {5, 10}},
               {"restarts", 4}};
  j["trajectory"] = {{"T_ns", 1.0},
                     {"N", 10},
                     {"samples", 801},
                     {"initial_state", "0"},
                     {"population_floor", 1e-9}};
  j["multipulse"] = {{"T_ns", 0.2}, {"N", 10}, {"n_max", 5000}};
  j["psd"] = {{"T_ns", 1.0}, {"N", 10}, {"samples", 4096}, {"zero_pad", 8}};
  return j;
}

namespace {

// file values win; object keys must exist in the defaults except for the
// free-form "system" subtree (validated by SpinSystem::from_config)
void deep_merge(json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    if (!base.contains(key))
      throw ConfigError("config: unknown key '" + sub + "'");
    if (sub == "system") {
      base[key] = value;
    } else if (base[key].is_object() && value.is_object()) {
      deep_merge(base[key], value, sub);
    } else {
      base[key] = value;
    }
  }
}

}  // namespace

AppConfig AppConfig::builtin() {
  AppConfig c;
  c.root_ = defaults();
  return c;
}

AppConfig AppConfig::from_json(const json& file_values) {
  AppConfig c;
  c.root_ = defaults();
  deep_merge(c.root_, file_values, "");
  return c;
}

AppConfig AppConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return from_json(j);
}

void AppConfig::set_override(const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key.path=value, got '" + key_eq_value + "'");
  const std::string dotted = key_eq_value.substr(0, eq);
  const std::string value_text = key_eq_value.substr(eq + 1);

  json* node = &root_;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    parts.push_back(dotted.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw ConfigError("--set: unknown config key '" + dotted + "'");
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->is_object() || !node->contains(leaf))
    throw ConfigError("--set: unknown config key '" + dotted + "'");

  json parsed;
  try {
    parsed = json::parse(value_text);
  } catch (const json::parse_error&) {
    parsed = value_text;  // bare strings are fine
  }
  (*node)[leaf] = parsed;
}

void AppConfig::set_profile(const std::string& profile) {
  if (profile != "fast" && profile != "standard" && profile != "verify")
    throw ConfigError("tolerance profile must be fast, standard or verify");
  root_["tolerances"]["profile"] = profile;
}

std::uint64_t AppConfig::seed() const {
  return root_.at("seed").get<std::uint64_t>();
}

SpinSystem AppConfig::system() const {
  return SpinSystem::from_config(root_.at("system"));
}

double AppConfig::ramp_fraction() const {
  return root_.at("envelope").at("ramp_fraction").get<double>();
}

Tolerances AppConfig::analysis_tolerance() const {
  const auto& tols = root_.at("tolerances");
  const std::string profile = tols.at("profile").get<std::string>();
  const double v = tols.at(profile).get<double>();
  return Tolerances{v, v};
}

OptimizerOptions AppConfig::optimizer_options() const {
  const auto& jopt = root_.at("optimizer");
  const auto& tols = root_.at("tolerances");
  const std::string profile = tols.at("profile").get<std::string>();

  OptimizerOptions opts;
  opts.core.max_iterations = jopt.at("max_iterations").get<int>();
  opts.core.grad_inf_tol = jopt.at("grad_inf_tol").get<double>();
  opts.core.rel_obj_tol = jopt.at("rel_obj_tol").get<double>();
  opts.core.memory = jopt.at("memory").get<int>();
  opts.core.armijo_c = jopt.at("armijo_c").get<double>();
  opts.core.shrink = jopt.at("backtrack_shrink").get<double>();
  opts.core.max_backtracks = jopt.at("max_backtracks").get<int>();
  opts.bounds.amp_max_gauss = jopt.at("amp_bound_gauss").get<double>();
  opts.bounds.freq_max_rad_ns = two_pi * jopt.at("freq_bound_ghz").get<double>();
  opts.frame_correction = jopt.at("frame_correction").get<bool>();
  opts.ramp_fraction = ramp_fraction();

  const double fast = tols.at("fast").get<double>();
  const double verify = tols.at("verify").get<double>();
  // fast profile keeps verification cheap for smoke runs; verify profile
  // optimizes at full accuracy
  if (profile == "fast") {
    opts.fast_tol = Tolerances{fast, fast};
    opts.verify_tol = Tolerances{fast, fast};
  } else if (profile == "verify") {
    opts.fast_tol = Tolerances{verify, verify};
    opts.verify_tol = Tolerances{verify, verify};
  } else {
    opts.fast_tol = Tolerances{fast, fast};
    opts.verify_tol = Tolerances{verify, verify};
  }
  return opts;
}

ScanConfig AppConfig::scan_config(const std::string& out_dir, int jobs) const {
  const auto& jscan = root_.at("scan");
  ScanConfig sc;
  sc.durations_ns = jscan.at("durations_ns").get<std::vector<double>>();
  sc.basis_counts = jscan.at("basis_counts").get<std::vector<int>>();
  sc.restarts = jscan.at("restarts").get<int>();
  sc.opts = optimizer_options();
  sc.system_config = root_.at("system");
  sc.out_dir = out_dir;
  sc.jobs = jobs;
  sc.global_seed = seed();
  sc.validate();
  return sc;
}

const nlohmann::json& AppConfig::section(const std::string& name) const {
  return root_.at(name);
}

}  // namespace nvqoc
