#include "nvqoc/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nvqoc {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// dense-output weights
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

double error_norm(const Mat& err, const Mat& y0, const Mat& y1, double atol,
                  double rtol) {
  double acc = 0.0;
  const auto n = err.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sk =
        atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double q = std::abs(err(i)) / sk;
    acc += q * q;
  }
  return std::sqrt(acc / double(n));
}

using Rhs = std::function<void(double, const Mat&, Mat&)>;
using SampleSink = std::function<void(double, const Mat&)>;
using Stabilizer = std::function<void(Mat&)>;

// Accepted local errors accumulate a secular drift off the unitary group
// (~steps x tol). Re-projecting the propagated block onto the manifold every
// few steps and at the end removes the normal component of that drift, so
// the returned unitary defect sits at roundoff instead of steps x tol.
constexpr int stabilize_interval = 16;

// One Newton-Schulz step of the polar decomposition; quadratic, so a single
// application is exact to first order in the defect.
void project_unitary_block(Mat& y, int dim) {
  auto u = y.leftCols(dim);
  Mat m = 1.5 * Mat::Identity(dim, dim) - 0.5 * (u.adjoint() * u);
  y.leftCols(dim) = (u * m).eval();
}

// Adaptive RK5(4) over a complex-matrix state. Sample times (sorted) are
// served from the 4th-order dense interpolant of each accepted step.
void integrate_dopri5(const Rhs& rhs, double t_end, Mat& y,
                      const Tolerances& tol, IntegratorStats& stats,
                      const std::vector<double>& sample_times = {},
                      const SampleSink& on_sample = {},
                      const Stabilizer& stabilize = {}) {
  const double atol = tol.abs, rtol = tol.rel;
  if (!(atol > 0.0) || !(rtol > 0.0))
    throw std::invalid_argument("integrate: tolerances must be positive");
  if (!(t_end >= 0.0) || !std::isfinite(t_end))
    throw std::invalid_argument("integrate: bad end time");

  std::size_t next_sample = 0;
  while (next_sample < sample_times.size() && sample_times[next_sample] <= 0.0) {
    on_sample(sample_times[next_sample], y);
    ++next_sample;
  }
  if (t_end == 0.0) return;

  const double h_max = t_end / 10.0;
  double h = std::min(t_end / 1000.0, h_max);
  double t = 0.0;

  Mat k1(y.rows(), y.cols()), k2(y.rows(), y.cols()), k3(y.rows(), y.cols()),
      k4(y.rows(), y.cols()), k5(y.rows(), y.cols()), k6(y.rows(), y.cols()),
      k7(y.rows(), y.cols()), ytmp(y.rows(), y.cols()), ynew(y.rows(), y.cols()),
      yerr(y.rows(), y.cols());

  rhs(t, y, k1);
  ++stats.rhs_evals;

  constexpr double beta = 0.04, expo1 = 0.2 - beta * 0.75, safe = 0.9;
  constexpr double facmin = 0.2, facmax = 10.0;
  double facold = 1e-4;
  bool last_rejected = false;
  const long max_steps = 20'000'000;

  while (t < t_end) {
    const double remaining = t_end - t;
    if (remaining <= 4.0 * std::numeric_limits<double>::epsilon() * t_end) break;
    if (stats.accepted + stats.rejected > max_steps)
      throw IntegrationError("integrate: step budget exhausted at t=" +
                             std::to_string(t));
    if (h < 1e-14 * std::max(1.0, t_end)) {
      std::ostringstream msg;
      msg << "integrate: step-size underflow at t=" << t << " (h=" << h
          << "); the Hamiltonian is too stiff for the requested tolerance";
      throw IntegrationError(msg.str());
    }
    if (h > remaining) h = remaining;

    ytmp = y + (h * a21) * k1;
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ytmp, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + h, ynew, k7);
    stats.rhs_evals += 6;

    yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = error_norm(yerr, y, ynew, atol, rtol);
    if (!std::isfinite(err)) err = 1e10;

    const double fac11 = std::pow(err, expo1);
    if (err <= 1.0) {
      // serve dense-output samples inside (t, t+h]
      if (next_sample < sample_times.size() &&
          sample_times[next_sample] <= t + h + 1e-14 * t_end) {
        const Mat ydiff = ynew - y;
        const Mat bspl = h * k1 - ydiff;
        const Mat rc4 = ydiff - h * k7 - bspl;
        const Mat rc5 =
            h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        while (next_sample < sample_times.size() &&
               sample_times[next_sample] <= t + h + 1e-14 * t_end) {
          const double th =
              std::clamp((sample_times[next_sample] - t) / h, 0.0, 1.0);
          const Mat val =
              y + th * (ydiff + (1.0 - th) * (bspl + th * (rc4 + (1.0 - th) * rc5)));
          on_sample(sample_times[next_sample], val);
          ++next_sample;
        }
      }

      ++stats.accepted;
      facold = std::max(err, 1e-4);
      t += h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      if (stabilize && (stats.accepted % stabilize_interval == 0) && t < t_end) {
        stabilize(y);
        rhs(t, y, k1);  // refresh the FSAL stage for the projected state
        ++stats.rhs_evals;
      }
      double fac = fac11 / std::pow(facold, beta);
      fac = std::max(1.0 / facmax, std::min(1.0 / facmin, fac / safe));
      double hnew = h / fac;
      if (last_rejected) hnew = std::min(hnew, h);
      last_rejected = false;
      h = std::min(hnew, h_max);
    } else {
      ++stats.rejected;
      last_rejected = true;
      h = h / std::min(1.0 / facmin, fac11 / safe);
    }
  }
  if (stabilize) stabilize(y);
}

void validate_request(const PropagationRequest& req) {
  if (req.system == nullptr)
    throw std::invalid_argument("propagate: null system");
  if (!(req.T >= 0.0) || !std::isfinite(req.T))
    throw std::invalid_argument("propagate: duration must be finite and >= 0");
  for (double v : req.params.alpha)
    if (!std::isfinite(v))
      throw std::invalid_argument("propagate: non-finite pulse parameter");
  if (!req.trajectory_times.empty()) {
    if (!std::is_sorted(req.trajectory_times.begin(), req.trajectory_times.end()))
      throw std::invalid_argument("propagate: trajectory_times must be sorted");
    if (req.trajectory_times.front() < 0.0 || req.trajectory_times.back() > req.T)
      throw std::invalid_argument("propagate: trajectory_times outside [0, T]");
  }
}

// RHS shared by plain and GOAT propagation. The stacked state is
// [U | dU_1 | ... | dU_P] as a dim x dim*(1+P) matrix; the drift/drive
// generators carry the -i factor so the RHS is pure GEMM work.
class AnsatzRhs {
 public:
  AnsatzRhs(const SpinSystem& sys, const PulseParams& params, const Envelope& env,
            int n_par)
      : g0_(cxd(0, -1) * sys.drift()),
        gx_(cxd(0, -1) * sys.drive()),
        params_(params),
        env_(env),
        n_par_(n_par),
        dim_(sys.dimension()),
        gbuf_(std::size_t(std::max(n_par, 1))),
        htmp_(dim_, dim_),
        gxu_(dim_, dim_) {}

  void operator()(double t, const Mat& y, Mat& dy) {
    const double b = drive(params_, env_, t);
    htmp_ = g0_ + b * gx_;
    dy.noalias() = htmp_ * y;
    if (n_par_ > 0) {
      gxu_.noalias() = gx_ * y.leftCols(dim_);
      drive_gradient(params_, env_, t, {gbuf_.data(), std::size_t(n_par_)});
      for (int k = 0; k < n_par_; ++k)
        if (gbuf_[std::size_t(k)] != 0.0)
          dy.middleCols(dim_ * (k + 1), dim_) += gbuf_[std::size_t(k)] * gxu_;
    }
  }

 private:
  Mat g0_, gx_;
  const PulseParams& params_;
  const Envelope& env_;
  int n_par_;
  int dim_;
  std::vector<double> gbuf_;
  Mat htmp_, gxu_;
};

}  // namespace

PropagationResult propagate(const PropagationRequest& req) {
  validate_request(req);
  const int dim = req.system->dimension();
  PropagationResult res;
  AnsatzRhs rhs(*req.system, req.params, req.env, 0);
  auto rhs_fn = [&rhs](double t, const Mat& y, Mat& dy) { rhs(t, y, dy); };

  if (req.initial_state.has_value()) {
    const Vec& psi0 = *req.initial_state;
    if (psi0.size() != dim)
      throw std::invalid_argument("propagate: initial state dimension mismatch");
    if (std::abs(psi0.norm() - 1.0) > 1e-8)
      throw std::invalid_argument("propagate: initial state is not normalized");
    Mat y = psi0;
    std::vector<TrajectorySample>& traj = res.trajectory;
    auto sink = [&traj](double t, const Mat& val) {
      traj.push_back({t, val.cwiseAbs2().col(0)});
    };
    auto renorm = [](Mat& v) { v /= v.norm(); };
    integrate_dopri5(rhs_fn, req.T, y, req.tol, res.stats, req.trajectory_times,
                     sink, renorm);
    res.state_final = y.col(0);
  } else {
    Mat y = Mat::Identity(dim, dim);
    auto project = [dim](Mat& v) { project_unitary_block(v, dim); };
    integrate_dopri5(rhs_fn, req.T, y, req.tol, res.stats, {}, {}, project);
    res.u_final = std::move(y);
  }
  return res;
}

PropagationResult propagate_goat(const PropagationRequest& req) {
  validate_request(req);
  if (req.initial_state.has_value())
    throw std::invalid_argument("propagate_goat: gradients require identity propagation");
  const int dim = req.system->dimension();
  const int n_par = 3 * req.params.n_basis();

  AnsatzRhs rhs(*req.system, req.params, req.env, n_par);
  auto rhs_fn = [&rhs](double t, const Mat& y, Mat& dy) { rhs(t, y, dy); };

  Mat y = Mat::Zero(dim, dim * (1 + n_par));
  y.leftCols(dim) = Mat::Identity(dim, dim);

  PropagationResult res;
  // only the unitary block is projected; the sensitivity blocks carry no
  // manifold constraint
  auto project = [dim](Mat& v) { project_unitary_block(v, dim); };
  integrate_dopri5(rhs_fn, req.T, y, req.tol, res.stats, {}, {}, project);

  res.u_final = y.leftCols(dim);
  res.sensitivities.reserve(std::size_t(n_par));
  for (int k = 0; k < n_par; ++k)
    res.sensitivities.push_back(y.middleCols(dim * (k + 1), dim));
  return res;
}

PropagationResult sample_trajectory(const PropagationRequest& req) {
  if (!req.initial_state.has_value())
    throw std::invalid_argument("sample_trajectory: initial_state required");
  if (req.trajectory_times.empty())
    throw std::invalid_argument("sample_trajectory: trajectory_times required");
  return propagate(req);
}

Mat propagate_fixed_grid(const SpinSystem& system, const PulseParams& params,
                         const Envelope& env, double T, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("propagate_fixed_grid: need steps >= 1");
  const int dim = system.dimension();
  AnsatzRhs rhs(system, params, env, 0);

  Mat y = Mat::Identity(dim, dim);
  Mat k1(dim, dim), k2(dim, dim), k3(dim, dim), k4(dim, dim), k5(dim, dim),
      k6(dim, dim), k7(dim, dim), ytmp(dim, dim);
  const double h = T / n_steps;
  rhs(0.0, y, k1);
  for (int i = 0; i < n_steps; ++i) {
    const double t = T * i / n_steps;
    ytmp = y + (h * a21) * k1;
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ytmp, k6);
    ytmp = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + h, ytmp, k7);
    y.swap(ytmp);
    k1.swap(k7);  // FSAL
  }
  return y;
}

Mat propagate_custom_drive(const SpinSystem& system,
                           const std::function<double(double)>& bx, double T,
                           const Tolerances& tol, IntegratorStats* stats) {
  const int dim = system.dimension();
  const Mat g0 = cxd(0, -1) * system.drift();
  const Mat gx = cxd(0, -1) * system.drive();
  Mat htmp(dim, dim);
  auto rhs_fn = [&](double t, const Mat& y, Mat& dy) {
    htmp = g0 + bx(t) * gx;
    dy.noalias() = htmp * y;
  };
  Mat y = Mat::Identity(dim, dim);
  IntegratorStats local;
  auto project = [dim](Mat& v) { project_unitary_block(v, dim); };
  integrate_dopri5(rhs_fn, T, y, tol, local, {}, {}, project);
  if (stats) *stats = local;
  return y;
}

}  // namespace nvqoc
