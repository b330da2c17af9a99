#pragma once

#include <span>
#include <string>
#include <vector>

#include "nvqoc/common.hpp"
#include "nvqoc/spin_system.hpp"

namespace nvqoc {

// Resonant Gaussian pi-pulse: envelope peak * exp(-(t-T/2)^2 / (2 sigma^2))
// with sigma = T/6 (truncated at [0, T]), carrier at the qubit transition,
// peak chosen so the rotating-frame Rabi area mu * integral(envelope) = pi
// with mu the |0><-1| matrix element of the drive operator.
struct GaussianPiReference {
  double T = 0.0;          // ns
  double sigma = 0.0;      // ns
  double peak_gauss = 0.0; // envelope peak
  double carrier_ghz = 0.0;
  std::vector<double> t;
  std::vector<double> bx;  // modulated waveform samples

  double envelope_at(double time) const;
  double value_at(double time) const;  // envelope * carrier
};

GaussianPiReference gaussian_pi_reference(double T, const SpinSystem& system,
                                          int n_samples = 4096,
                                          double sigma_fraction = 1.0 / 6.0);

struct SpectrumResult {
  std::vector<double> freq_ghz;  // ascending, one-sided
  std::vector<double> psd;       // density: sum(psd * df) = mean square
  double sample_rate_ghz = 0.0;
  int zero_pad = 8;
  std::string window = "rectangular";
};

// One-sided periodogram of a real waveform. Rectangular window (the pulses
// are time-limited and zero at both ends), zero-padded for display
// resolution, density normalized.
SpectrumResult psd(std::span<const double> samples, double sample_rate_ghz,
                   int zero_pad = 8);

// Variant taking an explicit time axis; rejects non-uniform sampling.
SpectrumResult psd(std::span<const double> t_ns, std::span<const double> samples,
                   int zero_pad = 8);

struct MultipulseTrace {
  std::vector<long> counts;        // even pulse numbers, ascending
  std::vector<double> population;  // |<target|psi_k>|^2 at those counts
  double max_norm_defect = 0.0;    // max | ||psi_k|| - 1 |
};

// Repeated application of a cached pulse unitary psi_{k+1} = U psi_k,
// recording the target population at even counts only.
MultipulseTrace multipulse_trace(const Mat& u_pulse, const Vec& initial_state,
                                 const Vec& target_state, long n_max,
                                 double unitarity_tol = 1e-6);

// |+, down, down, ...> with |+> = (|m_s=0> + |m_s=-1>)/sqrt(2).
Vec sensing_plus_state(const SpinSystem& system);

}  // namespace nvqoc
