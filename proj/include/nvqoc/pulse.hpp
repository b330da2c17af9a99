#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "nvqoc/common.hpp"

namespace nvqoc {

// Control vector alpha = (a_1, w_1, p_1, ..., a_N, w_N, p_N).
// Amplitudes in Gauss, frequencies in rad/ns (angular), phases in rad.
// This flattening order is canonical for gradients and persistence.
struct PulseParams {
  std::vector<double> alpha;

  PulseParams() = default;
  explicit PulseParams(std::vector<double> flat);

  int n_basis() const { return int(alpha.size()) / 3; }
  double amp(int i) const { return alpha[std::size_t(3 * i)]; }
  double freq(int i) const { return alpha[std::size_t(3 * i + 1)]; }
  double phase(int i) const { return alpha[std::size_t(3 * i + 2)]; }
  double& amp(int i) { return alpha[std::size_t(3 * i)]; }
  double& freq(int i) { return alpha[std::size_t(3 * i + 1)]; }
  double& phase(int i) { return alpha[std::size_t(3 * i + 2)]; }
};

// Flat-topped cosine window: raised-cosine ramps of length tau_r at both
// ends, value omega_m on the plateau, exactly zero at t=0 and t=tau_c.
struct Envelope {
  double tau_c = 1.0;
  double tau_r = 0.3;
  double omega_m = 1.0;

  Envelope() = default;
  Envelope(double tau_c_ns, double tau_r_ns, double omega_m_scale = 1.0);

  // ramp defaults to 0.3 * tau_c
  static Envelope for_duration(double tau_c_ns, double ramp_fraction = 0.3);
};

// b(t) = sum_i a_i sin(w_i t + p_i)
double basis_sum(const PulseParams& params, double t);

// Window value; zero outside [0, tau_c].
double envelope(const Envelope& env, double t);

// B_x(alpha, t) = envelope * basis_sum, in Gauss.
double drive(const PulseParams& params, const Envelope& env, double t);

// Analytic partials dB_x/d(alpha_k), in canonical flattening order.
// `out` must have length 3N.
void drive_gradient(const PulseParams& params, const Envelope& env, double t,
                    std::span<double> out);

// max_t |B_x(t)| over [0, tau_c]: uniform scan (resolution >= 1000 samples)
// plus a golden-section polish around the best bracket.
double max_amplitude(const PulseParams& params, const Envelope& env,
                     int resolution = 4096);

// Two-column waveform export: "t_ns  B_x_gauss".
void write_waveform(std::ostream& os, const PulseParams& params,
                    const Envelope& env, int n_samples);

// Uniform samples of B_x on [0, tau_c] (n_samples points, endpoints included).
std::vector<double> sample_waveform(const PulseParams& params, const Envelope& env,
                                    int n_samples);

}  // namespace nvqoc
