#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvqoc/common.hpp"

namespace nvqoc {

// One spin in the registry. `local_term_ghz` multiplies Iz^2 for spin-1
// nuclei (quadrupole) and Iz for spin-1/2 nuclei (z-frequency offset).
// Site 0 is always the electron; its Sz^2 coefficient is the zero-field
// splitting D and lives on the system, not the site.
struct SpinSite {
  std::string label;
  double spin = 0.5;
  double gamma_ghz_per_g = 0.0;
  double local_term_ghz = 0.0;

  int local_dim() const { return int(std::lround(2.0 * spin)) + 1; }
};

struct SpinOperators {
  Mat sx, sy, sz;
};

// Angular-momentum matrices in the Sz eigenbasis, eigenvalues descending.
// Only s = 1/2 and s = 1 are accepted.
SpinOperators spin_operators(double spin);

// Immutable spin registry plus the derived drift/drive operators.
// Units: all configured frequencies are linear GHz, fields are Gauss,
// time is ns. The derived matrices carry the 2*pi factor, so the
// propagator evolves with phase = 2*pi * f * t directly.
class SpinSystem {
 public:
  static SpinSystem from_config(const nlohmann::json& config);
  static SpinSystem from_config_text(const std::string& text);

  // Shipped defaults: electron + 14N + two 13C at B_z = 850 G.
  // Hyperfine tensors are order-of-magnitude placeholders, not literature
  // values; see configs/SCHEMA.md.
  static nlohmann::json default_config();
  static nlohmann::json electron_only_config();

  nlohmann::json to_config() const;

  int dimension() const { return dimension_; }
  const std::vector<SpinSite>& sites() const { return sites_; }
  double zero_field_ghz() const { return zero_field_ghz_; }
  double static_field_gauss() const { return static_field_gauss_; }
  const std::map<std::size_t, Eigen::Matrix3d>& hyperfine() const { return hyperfine_; }

  // H0 in angular units (rad/ns).
  const Mat& drift() const { return drift_; }
  // Hx in angular units per Gauss (rad/(ns*G)); H(t) = H0 + Bx(t)*Hx.
  const Mat& drive() const { return drive_; }

  // Kronecker embedding of a local operator at `site` into the full space.
  Mat embed(const Mat& local_op, std::size_t site) const;

  // Basis bookkeeping. Local levels are indices 0..2s in descending m.
  int basis_index(std::span<const int> local_levels) const;
  std::string basis_label(int index) const;
  // Index of |m_e, down, down, ...> with all nuclei at lowest m.
  // electron_level: 0 -> m=+1, 1 -> m=0, 2 -> m=-1.
  int polarized_index(int electron_level) const;

  // Transition frequencies (linear GHz) between drift eigenstates
  // adiabatically connected to the polarized basis states.
  double qubit_gap_ghz() const;  // |0,down...> <-> |-1,down...>
  double upper_gap_ghz() const;  // |0,down...> <-> |+1,down...>

 private:
  SpinSystem() = default;
  void build_operators();
  double eigenenergy_at(int basis_idx) const;

  std::vector<SpinSite> sites_;
  double zero_field_ghz_ = 0.0;
  double static_field_gauss_ = 0.0;
  std::map<std::size_t, Eigen::Matrix3d> hyperfine_;
  int dimension_ = 0;
  Mat drift_, drive_;
};

// Free-function forms of the derived-operator constructors.
Mat build_drift(const SpinSystem& system);
Mat build_drive_operator(const SpinSystem& system);
SpinSystem load_system_config(const std::string& text);

Mat kron(const Mat& a, const Mat& b);

}  // namespace nvqoc
