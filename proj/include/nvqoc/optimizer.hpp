#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvqoc/lbfgs.hpp"
#include "nvqoc/objective.hpp"
#include "nvqoc/propagator.hpp"
#include "nvqoc/spin_system.hpp"

namespace nvqoc {

// Box constraints on the control vector: a_i in [-amp_max, amp_max] Gauss,
// w_i in [0, freq_max] rad/ns, phases unbounded.
struct ParameterBounds {
  double amp_max_gauss = 2000.0;
  double freq_max_rad_ns = two_pi * 20.0;

  std::vector<double> lower(int n_basis) const;
  std::vector<double> upper(int n_basis) const;
};

struct OptimizerOptions {
  lbfgs::Options core;  // iteration caps, stopping tolerances, line search
  ParameterBounds bounds;
  Tolerances fast_tol = Tolerances::fast();      // used during optimization
  Tolerances verify_tol = Tolerances::verify();  // used for the recorded infidelity
  bool frame_correction = true;
  double ramp_fraction = 0.3;
};

struct ControlProblem {
  const SpinSystem* system = nullptr;
  double T = 1.0;
  int n_basis = 10;
};

struct OptimizationRecord {
  double T = 0.0;
  int n_basis = 0;
  std::uint64_t seed = 0;
  std::vector<double> alpha;
  double infidelity = 1.0;       // re-verified at the verify tolerance
  double infidelity_fast = 1.0;  // objective value at the fast tolerance
  double max_amp_gauss = 0.0;
  int iterations = 0;
  std::string termination;
  std::vector<std::array<double, 2>> history;  // (g, |grad|_inf) per iteration
  double wall_ms = 0.0;  // volatile; excluded from persistence and equality

  nlohmann::json to_json() const;
  static OptimizationRecord from_json(const nlohmann::json& j);
  bool operator==(const OptimizationRecord& other) const;
};

// Deterministic seed for one restart of one scan cell.
std::uint64_t derive_seed(std::uint64_t global_seed, double T, int n_basis,
                          int restart);

// Deterministic starting point: amplitudes uniform within 10% of the bound,
// frequencies log-uniform over [2*pi*0.05, freq_max] with component 0 pinned
// to the qubit transition, phases uniform in [0, 2*pi).
std::vector<double> random_init(int n_basis, const ParameterBounds& bounds,
                                std::uint64_t seed, double qubit_gap_ghz);

OptimizationRecord lbfgs_minimize(const ControlProblem& problem,
                                  const OptimizerOptions& opts,
                                  std::uint64_t seed);

struct MultistartResult {
  std::size_t best_index = 0;
  std::vector<OptimizationRecord> records;

  const OptimizationRecord& best() const { return records[best_index]; }
};

// Independent seeded restarts, argmin by verified infidelity with lower
// max amplitude as the tiebreak. Individual failures terminate their own
// record; the batch always completes (cooperative interruption aside).
MultistartResult multistart(const ControlProblem& problem,
                            const OptimizerOptions& opts, int restarts,
                            std::uint64_t global_seed, int jobs = 1);

std::size_t pick_best(const std::vector<OptimizationRecord>& records);

}  // namespace nvqoc
