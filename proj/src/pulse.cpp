#include "nvqoc/pulse.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>

namespace nvqoc {

PulseParams::PulseParams(std::vector<double> flat) : alpha(std::move(flat)) {
  if (alpha.empty() || alpha.size() % 3 != 0)
    throw std::invalid_argument("PulseParams: length must be a positive multiple of 3");
  for (double v : alpha)
    if (!std::isfinite(v))
      throw std::invalid_argument("PulseParams: non-finite parameter");
}

Envelope::Envelope(double tau_c_ns, double tau_r_ns, double omega_m_scale)
    : tau_c(tau_c_ns), tau_r(tau_r_ns), omega_m(omega_m_scale) {
  if (!(tau_c > 0.0) || !(tau_r > 0.0) || tau_r > tau_c / 2.0 + 1e-15)
    throw std::invalid_argument("Envelope: need 0 < tau_r <= tau_c/2");
}

Envelope Envelope::for_duration(double tau_c_ns, double ramp_fraction) {
  return Envelope(tau_c_ns, ramp_fraction * tau_c_ns);
}

double basis_sum(const PulseParams& params, double t) {
  double b = 0.0;
  const int n = params.n_basis();
  for (int i = 0; i < n; ++i)
    b += params.amp(i) * std::sin(params.freq(i) * t + params.phase(i));
  return b;
}

double envelope(const Envelope& env, double t) {
  if (t < 0.0 || t > env.tau_c) return 0.0;
  if (t <= env.tau_r)
    return 0.5 * (1.0 - std::cos(std::numbers::pi * t / env.tau_r)) * env.omega_m;
  if (t >= env.tau_c - env.tau_r)
    return 0.5 * (1.0 - std::cos(std::numbers::pi * (env.tau_c - t) / env.tau_r)) *
           env.omega_m;
  return env.omega_m;
}

double drive(const PulseParams& params, const Envelope& env, double t) {
  const double w = envelope(env, t);
  if (w == 0.0) return 0.0;
  return w * basis_sum(params, t);
}

void drive_gradient(const PulseParams& params, const Envelope& env, double t,
                    std::span<double> out) {
  const int n = params.n_basis();
  if (out.size() != std::size_t(3 * n))
    throw std::invalid_argument("drive_gradient: output span has wrong length");
  const double w = envelope(env, t);
  if (w == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  for (int i = 0; i < n; ++i) {
    const double arg = params.freq(i) * t + params.phase(i);
    const double s = std::sin(arg), c = std::cos(arg);
    out[std::size_t(3 * i)] = w * s;
    out[std::size_t(3 * i + 1)] = w * params.amp(i) * t * c;
    out[std::size_t(3 * i + 2)] = w * params.amp(i) * c;
  }
}

namespace {

// golden-section maximization of |B_x| on [lo, hi]
double golden_polish(const PulseParams& params, const Envelope& env, double lo,
                     double hi) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = std::abs(drive(params, env, x1));
  double f2 = std::abs(drive(params, env, x2));
  for (int it = 0; it < 80 && (b - a) > 1e-14 * std::max(1.0, env.tau_c); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = std::abs(drive(params, env, x2));
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = std::abs(drive(params, env, x1));
    }
  }
  return std::max(f1, f2);
}

}  // namespace

double max_amplitude(const PulseParams& params, const Envelope& env,
                     int resolution) {
  if (resolution < 1000)
    throw std::invalid_argument("max_amplitude: resolution must be >= 1000");
  const double dt = env.tau_c / resolution;
  double best = 0.0;
  int best_i = 0;
  for (int i = 0; i <= resolution; ++i) {
    const double v = std::abs(drive(params, env, i * dt));
    if (v > best) {
      best = v;
      best_i = i;
    }
  }
  if (best == 0.0) return 0.0;
  const double lo = std::max(0.0, (best_i - 1) * dt);
  const double hi = std::min(env.tau_c, (best_i + 1) * dt);
  return std::max(best, golden_polish(params, env, lo, hi));
}

std::vector<double> sample_waveform(const PulseParams& params, const Envelope& env,
                                    int n_samples) {
  if (n_samples < 2)
    throw std::invalid_argument("sample_waveform: need at least 2 samples");
  std::vector<double> out(static_cast<std::size_t>(n_samples));
  const double dt = env.tau_c / (n_samples - 1);
  for (int i = 0; i < n_samples; ++i)
    out[std::size_t(i)] = drive(params, env, i * dt);
  return out;
}

void write_waveform(std::ostream& os, const PulseParams& params,
                    const Envelope& env, int n_samples) {
  const auto samples = sample_waveform(params, env, n_samples);
  const double dt = env.tau_c / (n_samples - 1);
  os << "t_ns\tB_x_gauss\n";
  os << std::setprecision(17);
  for (int i = 0; i < n_samples; ++i)
    os << i * dt << '\t' << samples[std::size_t(i)] << '\n';
}

}  // namespace nvqoc
