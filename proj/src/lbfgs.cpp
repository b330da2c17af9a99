#include "nvqoc/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace nvqoc::lbfgs {

const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged_grad: return "converged_grad";
    case Termination::converged_obj: return "converged_obj";
    case Termination::max_iterations: return "max_iter";
    case Termination::linesearch_fail: return "linesearch_fail";
  }
  return "unknown";
}

Termination termination_from_string(const std::string& s) {
  if (s == "converged_grad") return Termination::converged_grad;
  if (s == "converged_obj") return Termination::converged_obj;
  if (s == "max_iter") return Termination::max_iterations;
  if (s == "linesearch_fail") return Termination::linesearch_fail;
  throw std::invalid_argument("unknown termination: " + s);
}

namespace {

using Vecd = std::vector<double>;

double dot(const Vecd& a, const Vecd& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Box {
  const Vecd* lo;
  const Vecd* hi;

  void project(Vecd& x) const {
    if (lo)
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(x[i], (*lo)[i]);
    if (hi)
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::min(x[i], (*hi)[i]);
  }

  // infinity norm of x - P(x - g); the box-aware stationarity measure
  double projected_grad_norm(const Vecd& x, const Vecd& g) const {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double xi = x[i] - g[i];
      if (lo) xi = std::max(xi, (*lo)[i]);
      if (hi) xi = std::min(xi, (*hi)[i]);
      m = std::max(m, std::abs(x[i] - xi));
    }
    return m;
  }

  // coordinates pinned at a bound with the gradient pushing outward; the
  // quasi-Newton direction is restricted to the complement, otherwise the
  // curvature mixing can turn the projected step into an ascent direction
  bool active(const Vecd& x, const Vecd& g, std::size_t i) const {
    if (lo && x[i] <= (*lo)[i] && g[i] > 0.0) return true;
    if (hi && x[i] >= (*hi)[i] && g[i] < 0.0) return true;
    return false;
  }
};

}  // namespace

Result minimize(const Objective& f, std::vector<double> x0, const Options& opt) {
  const std::size_t n = x0.size();
  if (n == 0) throw std::invalid_argument("lbfgs: empty parameter vector");
  if (opt.memory < 1 || opt.grad_inf_tol <= 0 || opt.rel_obj_tol <= 0)
    throw std::invalid_argument("lbfgs: invalid options");
  if ((!opt.lower.empty() && opt.lower.size() != n) ||
      (!opt.upper.empty() && opt.upper.size() != n))
    throw std::invalid_argument("lbfgs: bounds length mismatch");

  const Box box{opt.lower.empty() ? nullptr : &opt.lower,
                opt.upper.empty() ? nullptr : &opt.upper};

  Result res;
  Vecd x = std::move(x0);
  box.project(x);
  Vecd g(n), g_new(n), d(n), x_trial(n), q(n);
  Vecd empty;

  // The value-only path is canonical: gradient evaluations may integrate
  // with a different adaptive step sequence and return values that differ
  // at the tolerance level, so their value byproduct is discarded. This
  // keeps the accepted-step history exactly monotone.
  double fx = f(x, empty);
  if (!std::isfinite(fx))
    throw std::invalid_argument("lbfgs: objective non-finite at the initial point");
  f(x, g);
  res.history.push_back({fx, box.projected_grad_norm(x, g)});

  std::deque<Vecd> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    if (opt.should_stop && opt.should_stop()) throw Interrupted();

    const double pg = box.projected_grad_norm(x, g);
    if (pg <= opt.grad_inf_tol) {
      res.termination = Termination::converged_grad;
      res.x = std::move(x);
      res.f = fx;
      res.iterations = iter;
      return res;
    }

    // two-loop recursion for d = -H g on the free set
    q = g;
    for (std::size_t j = 0; j < n; ++j)
      if (box.active(x, g, j)) q[j] = 0.0;
    const Vecd g_free = q;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * dot(s_hist[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] -= alpha[i] * y_hist[i][j];
    }
    if (m > 0) {
      const double gamma =
          dot(s_hist[m - 1], y_hist[m - 1]) / dot(y_hist[m - 1], y_hist[m - 1]);
      for (std::size_t j = 0; j < n; ++j) q[j] *= gamma;
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * dot(y_hist[i], q);
      for (std::size_t j = 0; j < n; ++j)
        q[j] += (alpha[i] - beta) * s_hist[i][j];
    }
    for (std::size_t j = 0; j < n; ++j)
      d[j] = box.active(x, g, j) ? 0.0 : -q[j];
    if (dot(d, g_free) >= 0.0)  // not a descent direction; fall back to steepest
      for (std::size_t j = 0; j < n; ++j) d[j] = -g_free[j];

    // backtracking Armijo line search along the projection arc
    double step = 1.0;
    double f_trial = 0.0;
    bool accepted = false;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      for (std::size_t j = 0; j < n; ++j) x_trial[j] = x[j] + step * d[j];
      box.project(x_trial);
      double dir_deriv = 0.0;  // g . (x_trial - x)
      for (std::size_t j = 0; j < n; ++j) dir_deriv += g[j] * (x_trial[j] - x[j]);
      if (dir_deriv < 0.0) {
        f_trial = f(x_trial, empty);
        if (std::isfinite(f_trial) && f_trial <= fx + opt.armijo_c * dir_deriv) {
          accepted = true;
          break;
        }
      }
      step *= opt.shrink;
    }
    if (!accepted) {
      res.termination = Termination::linesearch_fail;
      res.x = std::move(x);
      res.f = fx;
      res.iterations = iter;
      return res;
    }

    const double f_prev = fx;
    fx = f_trial;
    f(x_trial, g_new);  // gradient at the accepted point

    Vecd s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = x_trial[j] - x[j];
      y[j] = g_new[j] - g[j];
    }
    const double sy = dot(s, y);
    if (sy > 1e-10 * std::sqrt(dot(s, s)) * std::sqrt(dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (int(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    x.swap(x_trial);
    g.swap(g_new);
    res.history.push_back({fx, box.projected_grad_norm(x, g)});

    const double denom = std::max({std::abs(f_prev), std::abs(fx), 1e-300});
    if (std::abs(f_prev - fx) <= opt.rel_obj_tol * denom) {
      res.termination = Termination::converged_obj;
      res.x = std::move(x);
      res.f = fx;
      res.iterations = iter + 1;
      return res;
    }
  }

  res.termination = Termination::max_iterations;
  res.x = std::move(x);
  res.f = fx;
  res.iterations = opt.max_iterations;
  return res;
}

}  // namespace nvqoc::lbfgs
