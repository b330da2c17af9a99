#include "nvqoc/spin_system.hpp"

#include <cmath>
#include <sstream>

namespace nvqoc {

namespace {

using nlohmann::json;

bool is_half(double s) { return std::abs(s - 0.5) < 1e-12; }
bool is_one(double s) { return std::abs(s - 1.0) < 1e-12; }

double require_finite(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + ": non-finite value");
  return v;
}

char level_char(double spin, int level) {
  // u/d for eigenvalues +-1 (or +-1/2), 0 for the spin-1 middle level
  if (is_one(spin)) return level == 0 ? 'u' : (level == 1 ? '0' : 'd');
  return level == 0 ? 'u' : 'd';
}

}  // namespace

SpinOperators spin_operators(double spin) {
  if (!is_half(spin) && !is_one(spin))
    throw std::invalid_argument("spin_operators: spin must be 1/2 or 1");
  const int dim = int(std::lround(2.0 * spin)) + 1;
  Mat sp = Mat::Zero(dim, dim);  // raising operator, descending-m basis
  for (int k = 1; k < dim; ++k) {
    const double m = spin - k;  // m of the lower state
    sp(k - 1, k) = std::sqrt(spin * (spin + 1.0) - m * (m + 1.0));
  }
  const Mat sm = sp.adjoint();
  SpinOperators ops;
  ops.sx = 0.5 * (sp + sm);
  ops.sy = cxd(0.0, -0.5) * (sp - sm);
  ops.sz = Mat::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) ops.sz(k, k) = spin - k;
  return ops;
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

SpinSystem SpinSystem::from_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("system config: ") + e.what());
  }
  return from_config(j);
}

SpinSystem SpinSystem::from_config(const json& config) {
  if (!config.is_object()) throw ConfigError("system config: expected an object");

  SpinSystem sys;
  if (!config.contains("zero_field")) throw ConfigError("zero_field: missing");
  sys.zero_field_ghz_ = require_finite(config.at("zero_field"), "zero_field");
  if (!config.contains("static_field_gauss"))
    throw ConfigError("static_field_gauss: missing");
  sys.static_field_gauss_ =
      require_finite(config.at("static_field_gauss"), "static_field_gauss");

  if (!config.contains("sites") || !config.at("sites").is_array() ||
      config.at("sites").empty())
    throw ConfigError("sites: missing electron site (need a non-empty array)");

  const auto& jsites = config.at("sites");
  for (std::size_t i = 0; i < jsites.size(); ++i) {
    const std::string path = "sites[" + std::to_string(i) + "]";
    const auto& js = jsites[i];
    if (!js.is_object()) throw ConfigError(path + ": expected an object");
    SpinSite site;
    site.label = js.value("label", "site" + std::to_string(i));
    site.spin = require_finite(js.at("spin"), path + ".spin");
    if (!is_half(site.spin) && !is_one(site.spin))
      throw ConfigError(path + ".spin: must be 0.5 or 1");
    site.gamma_ghz_per_g = require_finite(js.at("gamma"), path + ".gamma");
    if (site.gamma_ghz_per_g == 0.0)
      throw ConfigError(path + ".gamma: must be nonzero");
    if (js.contains("local_term"))
      site.local_term_ghz = require_finite(js.at("local_term"), path + ".local_term");
    if (i == 0 && site.local_term_ghz != 0.0)
      throw ConfigError(path + ".local_term: the electron Sz^2 coefficient is "
                        "zero_field; set local_term to 0 or omit it");
    sys.sites_.push_back(std::move(site));
  }
  if (!is_one(sys.sites_[0].spin))
    throw ConfigError("sites[0].spin: site 0 is the electron and must be spin 1");

  if (config.contains("hyperfine")) {
    const auto& jhf = config.at("hyperfine");
    if (!jhf.is_array()) throw ConfigError("hyperfine: expected an array");
    for (std::size_t k = 0; k < jhf.size(); ++k) {
      const std::string path = "hyperfine[" + std::to_string(k) + "]";
      const auto& jh = jhf[k];
      if (!jh.is_object() || !jh.contains("site") || !jh.contains("tensor"))
        throw ConfigError(path + ": expected {site, tensor}");
      if (!jh.at("site").is_number_integer())
        throw ConfigError(path + ".site: expected an integer site index");
      const long site = jh.at("site").get<long>();
      if (site < 1 || site >= long(sys.sites_.size()))
        throw ConfigError(path + ".site: index " + std::to_string(site) +
                          " out of range (nuclear sites are 1.." +
                          std::to_string(sys.sites_.size() - 1) + ")");
      if (sys.hyperfine_.count(std::size_t(site)))
        throw ConfigError(path + ".site: duplicate tensor for site " +
                          std::to_string(site));
      // tensor: flat row-major 9 entries, or 3 rows of 3
      const auto& jt = jh.at("tensor");
      std::vector<double> entries;
      if (jt.is_array() && jt.size() > 0 && jt[0].is_array()) {
        for (std::size_t r = 0; r < jt.size(); ++r)
          for (std::size_t c = 0; c < jt[r].size(); ++c)
            entries.push_back(require_finite(
                jt[r][c], path + ".tensor[" + std::to_string(r) + "][" +
                              std::to_string(c) + "]"));
      } else if (jt.is_array()) {
        for (std::size_t r = 0; r < jt.size(); ++r)
          entries.push_back(
              require_finite(jt[r], path + ".tensor[" + std::to_string(r) + "]"));
      } else {
        throw ConfigError(path + ".tensor: expected an array");
      }
      if (entries.size() != 9)
        throw ConfigError(path + ".tensor: site " + std::to_string(site) +
                          " needs 9 entries (3x3 row-major), got " +
                          std::to_string(entries.size()));
      Eigen::Matrix3d t;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) t(r, c) = entries[std::size_t(3 * r + c)];
      sys.hyperfine_.emplace(std::size_t(site), t);
    }
  }

  sys.dimension_ = 1;
  for (const auto& s : sys.sites_) sys.dimension_ *= s.local_dim();

  sys.build_operators();
  return sys;
}

nlohmann::json SpinSystem::to_config() const {
  json j;
  j["zero_field"] = zero_field_ghz_;
  j["static_field_gauss"] = static_field_gauss_;
  j["sites"] = json::array();
  for (const auto& s : sites_) {
    json js;
    js["label"] = s.label;
    js["spin"] = s.spin;
    js["gamma"] = s.gamma_ghz_per_g;
    js["local_term"] = s.local_term_ghz;
    j["sites"].push_back(std::move(js));
  }
  j["hyperfine"] = json::array();
  for (const auto& [site, t] : hyperfine_) {
    json jh;
    jh["site"] = site;
    std::vector<double> entries(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) entries[std::size_t(3 * r + c)] = t(r, c);
    jh["tensor"] = entries;
    j["hyperfine"].push_back(std::move(jh));
  }
  return j;
}

Mat SpinSystem::embed(const Mat& local_op, std::size_t site) const {
  if (site >= sites_.size())
    throw std::invalid_argument("embed: site index out of range");
  const int expect = sites_[site].local_dim();
  if (local_op.rows() != expect || local_op.cols() != expect)
    throw std::invalid_argument("embed: operator dimension " +
                                std::to_string(local_op.rows()) +
                                " does not match site dimension " +
                                std::to_string(expect));
  Mat acc = Mat::Identity(1, 1);
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const int d = sites_[i].local_dim();
    acc = (i == site) ? kron(acc, local_op) : kron(acc, Mat::Identity(d, d));
  }
  return acc;
}

void SpinSystem::build_operators() {
  Mat h0 = Mat::Zero(dimension_, dimension_);
  Mat hx = Mat::Zero(dimension_, dimension_);

  std::vector<SpinOperators> local;
  local.reserve(sites_.size());
  for (const auto& s : sites_) local.push_back(spin_operators(s.spin));

  // zero-field splitting on the electron
  h0 += zero_field_ghz_ * embed(local[0].sz * local[0].sz, 0);

  for (std::size_t i = 1; i < sites_.size(); ++i) {
    const Mat iz = embed(local[i].sz, i);
    if (is_one(sites_[i].spin))
      h0 += sites_[i].local_term_ghz * embed(local[i].sz * local[i].sz, i);
    else
      h0 += sites_[i].local_term_ghz * iz;
  }

  // hyperfine S . N_j . I_j
  for (const auto& [site, t] : hyperfine_) {
    const Mat s_ops[3] = {embed(local[0].sx, 0), embed(local[0].sy, 0),
                          embed(local[0].sz, 0)};
    const Mat i_ops[3] = {embed(local[site].sx, site), embed(local[site].sy, site),
                          embed(local[site].sz, site)};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (t(a, b) != 0.0) h0 += t(a, b) * (s_ops[a] * i_ops[b]);
  }

  // static Zeeman along z, and the x drive operator (per Gauss)
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    h0 += static_field_gauss_ * sites_[i].gamma_ghz_per_g * embed(local[i].sz, i);
    hx += sites_[i].gamma_ghz_per_g * embed(local[i].sx, i);
  }

  const double herm_defect =
      (h0 - Mat(h0.adjoint())).cwiseAbs().maxCoeff();
  if (herm_defect > 1e-12)
    throw ConfigError("system config: drift Hamiltonian is non-Hermitian "
                      "(defect " + std::to_string(herm_defect) + " GHz)");

  drift_ = two_pi * h0;
  drive_ = two_pi * hx;
}

int SpinSystem::basis_index(std::span<const int> local_levels) const {
  if (local_levels.size() != sites_.size())
    throw std::invalid_argument("basis_index: need one level per site");
  int idx = 0;
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const int d = sites_[i].local_dim();
    const int l = local_levels[i];
    if (l < 0 || l >= d) throw std::invalid_argument("basis_index: level out of range");
    idx = idx * d + l;
  }
  return idx;
}

std::string SpinSystem::basis_label(int index) const {
  if (index < 0 || index >= dimension_)
    throw std::invalid_argument("basis_label: index out of range");
  std::string chars(sites_.size(), '?');
  int rem = index;
  for (std::size_t i = sites_.size(); i-- > 0;) {
    const int d = sites_[i].local_dim();
    chars[i] = level_char(sites_[i].spin, rem % d);
    rem /= d;
  }
  return "|" + chars + ">";
}

int SpinSystem::polarized_index(int electron_level) const {
  std::vector<int> levels(sites_.size());
  levels[0] = electron_level;
  for (std::size_t i = 1; i < sites_.size(); ++i)
    levels[i] = sites_[i].local_dim() - 1;
  return basis_index(levels);
}

double SpinSystem::eigenenergy_at(int basis_idx) const {
  Eigen::SelfAdjointEigenSolver<Mat> es(drift_);
  int best = 0;
  double best_overlap = -1.0;
  for (int k = 0; k < dimension_; ++k) {
    const double ov = std::norm(es.eigenvectors()(basis_idx, k));
    if (ov > best_overlap) {
      best_overlap = ov;
      best = k;
    }
  }
  return es.eigenvalues()(best);
}

double SpinSystem::qubit_gap_ghz() const {
  const double e0 = eigenenergy_at(polarized_index(1));
  const double em1 = eigenenergy_at(polarized_index(2));
  return std::abs(em1 - e0) / two_pi;
}

double SpinSystem::upper_gap_ghz() const {
  const double e0 = eigenenergy_at(polarized_index(1));
  const double ep1 = eigenenergy_at(polarized_index(0));
  return std::abs(ep1 - e0) / two_pi;
}

Mat build_drift(const SpinSystem& system) { return system.drift(); }
Mat build_drive_operator(const SpinSystem& system) { return system.drive(); }
SpinSystem load_system_config(const std::string& text) {
  return SpinSystem::from_config_text(text);
}

nlohmann::json SpinSystem::default_config() {
  // Standard NV literature constants; hyperfine tensors are representative
  // placeholders in the 1e-4..1e-3 GHz range, not fitted values.
  return json{
      {"zero_field", 2.870},
      {"static_field_gauss", 850.0},
      {"sites",
       json::array({
           json{{"label", "e"}, {"spin", 1.0}, {"gamma", 2.8024e-3}},
           json{{"label", "14N"},
                {"spin", 1.0},
                {"gamma", -3.077e-7},
                {"local_term", -4.945e-3}},
           json{{"label", "13C1"},
                {"spin", 0.5},
                {"gamma", 1.0705e-6},
                {"local_term", 0.0}},
           json{{"label", "13C2"},
                {"spin", 0.5},
                {"gamma", 1.0705e-6},
                {"local_term", 0.0}},
       })},
      {"hyperfine",
       json::array({
           json{{"site", 1},
                {"tensor", {-2.70e-3, 0.0, 0.0, 0.0, -2.70e-3, 0.0, 0.0, 0.0,
                            -2.16e-3}}},
           json{{"site", 2},
                {"tensor", {1.8e-4, 0.0, 1.2e-4, 0.0, 1.9e-4, 0.0, 1.2e-4, 0.0,
                            2.6e-4}}},
           json{{"site", 3},
                {"tensor", {7.0e-5, 0.0, 4.0e-5, 0.0, 7.5e-5, 0.0, 4.0e-5, 0.0,
                            1.1e-4}}},
       })},
  };
}

nlohmann::json SpinSystem::electron_only_config() {
  return json{
      {"zero_field", 2.870},
      {"static_field_gauss", 850.0},
      {"sites", json::array({
                    json{{"label", "e"}, {"spin", 1.0}, {"gamma", 2.8024e-3}},
                })},
      {"hyperfine", json::array()},
  };
}

}  // namespace nvqoc
