#include "nvqoc/objective.hpp"

#include <cmath>

namespace nvqoc {

QubitSubspace default_qubit_subspace(const SpinSystem& system) {
  QubitSubspace sub;
  sub.idx0 = system.polarized_index(1);  // m_s = 0
  sub.idx1 = system.polarized_index(2);  // m_s = -1
  return sub;
}

Eigen::Matrix2cd target_x() {
  Eigen::Matrix2cd x;
  x << 0, 1, 1, 0;
  return x;
}

Eigen::Matrix2cd project_qubit(const Mat& u_full, const QubitSubspace& sub) {
  Eigen::Matrix2cd u;
  u << u_full(sub.idx0, sub.idx0), u_full(sub.idx0, sub.idx1),
      u_full(sub.idx1, sub.idx0), u_full(sub.idx1, sub.idx1);
  return u;
}

FrameCorrection::FrameCorrection(const SpinSystem& system, double T) {
  Eigen::SelfAdjointEigenSolver<Mat> es(system.drift());
  const auto& v = es.eigenvectors();
  Vec phases(system.dimension());
  for (int k = 0; k < system.dimension(); ++k)
    phases(k) = std::exp(cxd(0.0, es.eigenvalues()(k) * T));
  exp_ = v * phases.asDiagonal() * v.adjoint();
}

double infidelity(const Eigen::Matrix2cd& u) {
  const cxd z = u(0, 1) + u(1, 0);  // tr(u X)
  return 1.0 - std::norm(z) / 4.0;
}

std::vector<double> infidelity_gradient(const Eigen::Matrix2cd& u,
                                        const std::vector<Mat>& sensitivities,
                                        const QubitSubspace& sub,
                                        const Mat* frame_exp) {
  const cxd zbar = std::conj(u(0, 1) + u(1, 0));
  std::vector<double> grad(sensitivities.size());
  for (std::size_t k = 0; k < sensitivities.size(); ++k) {
    const Mat& s = sensitivities[k];
    cxd dz;
    if (frame_exp) {
      // plain contraction, no conjugation: sum_m E(i,m) dU(m,j)
      dz = frame_exp->row(sub.idx0).conjugate().dot(s.col(sub.idx1)) +
           frame_exp->row(sub.idx1).conjugate().dot(s.col(sub.idx0));
    } else {
      dz = s(sub.idx0, sub.idx1) + s(sub.idx1, sub.idx0);
    }
    grad[k] = -0.5 * std::real(dz * zbar);
  }
  return grad;
}

InversionObjective::InversionObjective(const SpinSystem& system, double T,
                                       int n_basis, double ramp_fraction,
                                       Tolerances tol, bool frame_correction)
    : system_(system),
      T_(T),
      n_basis_(n_basis),
      env_(Envelope::for_duration(T, ramp_fraction)),
      tol_(tol),
      frame_on_(frame_correction),
      sub_(default_qubit_subspace(system)) {
  if (n_basis < 1) throw std::invalid_argument("InversionObjective: need N >= 1");
  frame_exp_ = frame_on_ ? FrameCorrection(system, T).exponential()
                         : Mat(Mat::Identity(system.dimension(), system.dimension()));
  frame_rows_.resize(2, system.dimension());
  frame_rows_.row(0) = frame_exp_.row(sub_.idx0);
  frame_rows_.row(1) = frame_exp_.row(sub_.idx1);
}

PulseParams InversionObjective::to_params(std::span<const double> alpha) const {
  if (alpha.size() != std::size_t(3 * n_basis_))
    throw std::invalid_argument("InversionObjective: alpha has wrong length");
  return PulseParams(std::vector<double>(alpha.begin(), alpha.end()));
}

Eigen::Matrix2cd InversionObjective::project_corrected(const Mat& u_full) const {
  Eigen::Matrix2cd u;
  const Eigen::Vector2cd c0 = frame_rows_ * u_full.col(sub_.idx0);
  const Eigen::Vector2cd c1 = frame_rows_ * u_full.col(sub_.idx1);
  u.col(0) = c0;
  u.col(1) = c1;
  return u;
}

Mat InversionObjective::frame_correct(const Mat& u_full) const {
  return frame_exp_ * u_full;
}

double InversionObjective::value(std::span<const double> alpha) const {
  return value_at_tolerance(alpha, tol_);
}

double InversionObjective::value_at_tolerance(std::span<const double> alpha,
                                              Tolerances tol) const {
  PropagationRequest req;
  req.system = &system_;
  req.params = to_params(alpha);
  req.env = env_;
  req.T = T_;
  req.tol = tol;
  const PropagationResult res = propagate(req);
  return infidelity(project_corrected(res.u_final));
}

double InversionObjective::value_and_gradient(std::span<const double> alpha,
                                              std::span<double> grad) const {
  if (grad.size() != std::size_t(n_params()))
    throw std::invalid_argument("InversionObjective: gradient span has wrong length");
  PropagationRequest req;
  req.system = &system_;
  req.params = to_params(alpha);
  req.env = env_;
  req.T = T_;
  req.tol = tol_;
  req.want_gradient = true;
  const PropagationResult res = propagate_goat(req);

  const Eigen::Matrix2cd u = project_corrected(res.u_final);
  const cxd zbar = std::conj(u(0, 1) + u(1, 0));
  for (std::size_t k = 0; k < res.sensitivities.size(); ++k) {
    const Mat& s = res.sensitivities[k];
    const cxd du01 = frame_rows_.row(0).conjugate().dot(s.col(sub_.idx1));
    const cxd du10 = frame_rows_.row(1).conjugate().dot(s.col(sub_.idx0));
    grad[k] = -0.5 * std::real((du01 + du10) * zbar);
  }
  return infidelity(u);
}

}  // namespace nvqoc
