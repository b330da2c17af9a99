#pragma once

#include <span>
#include <vector>

#include "nvqoc/common.hpp"
#include "nvqoc/propagator.hpp"
#include "nvqoc/spin_system.hpp"

namespace nvqoc {

// Full-space basis indices of the qubit levels at fixed nuclear polarization.
struct QubitSubspace {
  int idx0 = 0;  // |m_s = 0,  nuclei all down>
  int idx1 = 0;  // |m_s = -1, nuclei all down>
};

QubitSubspace default_qubit_subspace(const SpinSystem& system);

// Target: population inversion X on the (|0>, |-1>) pair.
Eigen::Matrix2cd target_x();

// u = P_q^dag U P_q; generally non-unitary.
Eigen::Matrix2cd project_qubit(const Mat& u_full, const QubitSubspace& sub);

// exp(+i H0 T) applied on the left removes the drift phase accumulated over
// the pulse, so the inversion target is frame independent.
class FrameCorrection {
 public:
  FrameCorrection(const SpinSystem& system, double T);
  const Mat& exponential() const { return exp_; }
  Mat apply(const Mat& u_full) const { return exp_ * u_full; }

 private:
  Mat exp_;
};

// g = 1 - |tr(u X)|^2 / 4, in [0, 1], zero iff u = e^{i theta} X.
// (The /4 makes g(X) = 0 and g(0) = 1 with the 2x2 target.)
double infidelity(const Eigen::Matrix2cd& u);

// Chain rule through the projection: d_k u = P (E dU_k) P with E the frame
// factor (identity when frame correction is off).
std::vector<double> infidelity_gradient(const Eigen::Matrix2cd& u,
                                        const std::vector<Mat>& sensitivities,
                                        const QubitSubspace& sub,
                                        const Mat* frame_exp = nullptr);

// Bundles propagation + frame correction + projection + infidelity into the
// scalar objective g(alpha) the optimizer minimizes.
class InversionObjective {
 public:
  InversionObjective(const SpinSystem& system, double T, int n_basis,
                     double ramp_fraction, Tolerances tol,
                     bool frame_correction = true);

  int n_params() const { return 3 * n_basis_; }
  double duration() const { return T_; }
  const Envelope& envelope() const { return env_; }
  const QubitSubspace& subspace() const { return sub_; }
  const SpinSystem& system() const { return system_; }

  double value(std::span<const double> alpha) const;
  double value_and_gradient(std::span<const double> alpha,
                            std::span<double> grad) const;

  // g evaluated at a different integration tolerance (record verification).
  double value_at_tolerance(std::span<const double> alpha, Tolerances tol) const;

  Eigen::Matrix2cd project_corrected(const Mat& u_full) const;
  Mat frame_correct(const Mat& u_full) const;

 private:
  PulseParams to_params(std::span<const double> alpha) const;

  const SpinSystem& system_;
  double T_;
  int n_basis_;
  Envelope env_;
  Tolerances tol_;
  bool frame_on_;
  QubitSubspace sub_;
  Mat frame_exp_;        // identity if frame correction disabled
  Eigen::Matrix2Xcd frame_rows_;  // rows (idx0, idx1) of frame_exp_
};

}  // namespace nvqoc
