#include "nvqoc/analysis.hpp"

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "nvqoc/objective.hpp"

namespace nvqoc {

double GaussianPiReference::envelope_at(double time) const {
  if (time < 0.0 || time > T) return 0.0;
  const double x = (time - 0.5 * T) / sigma;
  return peak_gauss * std::exp(-0.5 * x * x);
}

double GaussianPiReference::value_at(double time) const {
  if (time < 0.0 || time > T) return 0.0;
  return envelope_at(time) *
         std::cos(two_pi * carrier_ghz * (time - 0.5 * T));
}

GaussianPiReference gaussian_pi_reference(double T, const SpinSystem& system,
                                          int n_samples, double sigma_fraction) {
  if (!(T > 0.0)) throw std::invalid_argument("gaussian_pi_reference: T must be > 0");
  if (n_samples < 2)
    throw std::invalid_argument("gaussian_pi_reference: need >= 2 samples");
  if (!(sigma_fraction > 0.0) || sigma_fraction > 0.5)
    throw std::invalid_argument("gaussian_pi_reference: sigma_fraction in (0, 0.5]");

  GaussianPiReference ref;
  ref.T = T;
  ref.sigma = sigma_fraction * T;
  ref.carrier_ghz = system.qubit_gap_ghz();

  const QubitSubspace sub = default_qubit_subspace(system);
  const double mu = std::abs(system.drive()(sub.idx0, sub.idx1));  // rad/(ns G)
  if (mu <= 0.0)
    throw std::invalid_argument("gaussian_pi_reference: drive does not couple the qubit");

  // closed-form area of the truncated Gaussian envelope
  const double area_unit = ref.sigma * std::sqrt(two_pi) *
                           std::erf(T / (2.0 * std::numbers::sqrt2 * ref.sigma));
  ref.peak_gauss = std::numbers::pi / (mu * area_unit);

  ref.t.resize(std::size_t(n_samples));
  ref.bx.resize(std::size_t(n_samples));
  const double dt = T / (n_samples - 1);
  for (int i = 0; i < n_samples; ++i) {
    ref.t[std::size_t(i)] = i * dt;
    ref.bx[std::size_t(i)] = ref.value_at(i * dt);
  }
  return ref;
}

SpectrumResult psd(std::span<const double> samples, double sample_rate_ghz,
                   int zero_pad) {
  if (samples.size() < 256)
    throw std::invalid_argument("psd: need at least 256 samples");
  if (!(sample_rate_ghz > 0.0))
    throw std::invalid_argument("psd: sample rate must be positive");
  if (zero_pad < 1) throw std::invalid_argument("psd: zero_pad must be >= 1");

  const std::size_t m = samples.size();
  const std::size_t nfft = m * std::size_t(zero_pad);
  std::vector<cxd> input(nfft, cxd(0.0, 0.0));
  for (std::size_t i = 0; i < m; ++i) input[i] = samples[i];

  std::vector<cxd> spectrum(nfft);
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, input);

  SpectrumResult out;
  out.sample_rate_ghz = sample_rate_ghz;
  out.zero_pad = zero_pad;
  const std::size_t n_one_sided = nfft / 2 + 1;
  out.freq_ghz.resize(n_one_sided);
  out.psd.resize(n_one_sided);
  const double df = sample_rate_ghz / double(nfft);
  // density normalization: sum(psd * df) equals the mean square of the
  // original m samples (Parseval)
  const double norm = 1.0 / (sample_rate_ghz * double(m));
  for (std::size_t k = 0; k < n_one_sided; ++k) {
    out.freq_ghz[k] = double(k) * df;
    double p = std::norm(spectrum[k]) * norm;
    const bool is_dc = (k == 0);
    const bool is_nyquist = (nfft % 2 == 0) && (k == nfft / 2);
    if (!is_dc && !is_nyquist) p *= 2.0;
    out.psd[k] = p;
  }
  return out;
}

SpectrumResult psd(std::span<const double> t_ns, std::span<const double> samples,
                   int zero_pad) {
  if (t_ns.size() != samples.size() || t_ns.size() < 2)
    throw std::invalid_argument("psd: time and sample arrays must match");
  const double dt = t_ns[1] - t_ns[0];
  if (!(dt > 0.0)) throw std::invalid_argument("psd: non-increasing time axis");
  for (std::size_t i = 1; i < t_ns.size(); ++i) {
    const double step = t_ns[i] - t_ns[i - 1];
    if (std::abs(step - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
      throw std::invalid_argument("psd: non-uniform sampling rejected");
  }
  return psd(samples, 1.0 / dt, zero_pad);
}

MultipulseTrace multipulse_trace(const Mat& u_pulse, const Vec& initial_state,
                                 const Vec& target_state, long n_max,
                                 double unitarity_tol) {
  if (u_pulse.rows() != u_pulse.cols())
    throw std::invalid_argument("multipulse_trace: unitary must be square");
  if (initial_state.size() != u_pulse.rows() ||
      target_state.size() != u_pulse.rows())
    throw std::invalid_argument("multipulse_trace: state dimension mismatch");
  if (n_max < 0 || n_max > 1'000'000)
    throw std::invalid_argument("multipulse_trace: n_max out of range (<= 1e6)");
  const double defect =
      (u_pulse.adjoint() * u_pulse - Mat::Identity(u_pulse.rows(), u_pulse.cols()))
          .cwiseAbs()
          .maxCoeff();
  if (defect > unitarity_tol)
    throw std::invalid_argument(
        "multipulse_trace: input is not unitary (defect " +
        std::to_string(defect) + ")");

  MultipulseTrace trace;
  Vec psi = initial_state;
  for (long k = 0; k <= n_max; ++k) {
    if (k % 2 == 0) {
      trace.counts.push_back(k);
      trace.population.push_back(std::norm(target_state.dot(psi)));
      trace.max_norm_defect =
          std::max(trace.max_norm_defect, std::abs(psi.norm() - 1.0));
    }
    if (k < n_max) psi = u_pulse * psi;
  }
  return trace;
}

Vec sensing_plus_state(const SpinSystem& system) {
  Vec psi = Vec::Zero(system.dimension());
  const QubitSubspace sub = default_qubit_subspace(system);
  psi(sub.idx0) = 1.0 / std::numbers::sqrt2;
  psi(sub.idx1) = 1.0 / std::numbers::sqrt2;
  return psi;
}

}  // namespace nvqoc
