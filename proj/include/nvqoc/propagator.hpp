#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "nvqoc/common.hpp"
#include "nvqoc/pulse.hpp"
#include "nvqoc/spin_system.hpp"

namespace nvqoc {

struct Tolerances {
  double abs = 1e-10;
  double rel = 1e-10;

  static Tolerances standard() { return {1e-10, 1e-10}; }
  // ensemble scans run the cheap profile; records are re-verified at verify()
  static Tolerances fast() { return {1e-8, 1e-8}; }
  static Tolerances verify() { return {1e-12, 1e-12}; }
};

struct IntegratorStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

struct PropagationRequest {
  const SpinSystem* system = nullptr;
  PulseParams params;
  Envelope env;
  double T = 0.0;  // ns
  Tolerances tol;
  bool want_gradient = false;
  std::vector<double> trajectory_times;       // sorted, within [0, T]
  std::optional<Vec> initial_state;           // normalized; identity propagation if absent
};

struct TrajectorySample {
  double t;
  Eigen::VectorXd populations;
};

struct PropagationResult {
  Mat u_final;                      // global unitary (identity propagation)
  Vec state_final;                  // final state (initial_state propagation)
  std::vector<Mat> sensitivities;   // dU/d(alpha_k), canonical flattening order
  std::vector<TrajectorySample> trajectory;
  IntegratorStats stats;
};

// dU/dt = -i H(t) U from U(0) = I, adaptive embedded RK5(4) with PI step
// control. H(t) = H0 + B_x(t) Hx in angular units.
PropagationResult propagate(const PropagationRequest& req);

// Joint integration of U and all 3N sensitivity blocks as one stacked state
// sharing step control:
//   d(dU_k)/dt = -i ( dB_x/d(alpha_k) Hx U + H dU_k ),  dU_k(0) = 0.
PropagationResult propagate_goat(const PropagationRequest& req);

// State propagation with dense-output sampling of basis populations at
// req.trajectory_times (no restart per sample).
PropagationResult sample_trajectory(const PropagationRequest& req);

// Unitary propagation under an arbitrary scalar drive B_x(t) (Gauss);
// used for reference pulses outside the sinusoidal ansatz.
Mat propagate_custom_drive(const SpinSystem& system,
                           const std::function<double(double)>& bx, double T,
                           const Tolerances& tol,
                           IntegratorStats* stats = nullptr);

// Uniform fixed-grid RK5 propagation (no adaptivity, no projection). On a
// frozen grid the map alpha -> U is smooth, so finite-difference oracles
// see the integration bias cancel in the difference quotient instead of
// being amplified by 1/h through step-sequence changes.
Mat propagate_fixed_grid(const SpinSystem& system, const PulseParams& params,
                         const Envelope& env, double T, int n_steps);

}  // namespace nvqoc
