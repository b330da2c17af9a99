#include "nvqoc/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "nvqoc/pulse.hpp"

namespace nvqoc {

std::vector<double> ParameterBounds::lower(int n_basis) const {
  std::vector<double> lo(std::size_t(3 * n_basis));
  for (int i = 0; i < n_basis; ++i) {
    lo[std::size_t(3 * i)] = -amp_max_gauss;
    lo[std::size_t(3 * i + 1)] = 0.0;
    lo[std::size_t(3 * i + 2)] = -std::numeric_limits<double>::infinity();
  }
  return lo;
}

std::vector<double> ParameterBounds::upper(int n_basis) const {
  std::vector<double> hi(std::size_t(3 * n_basis));
  for (int i = 0; i < n_basis; ++i) {
    hi[std::size_t(3 * i)] = amp_max_gauss;
    hi[std::size_t(3 * i + 1)] = freq_max_rad_ns;
    hi[std::size_t(3 * i + 2)] = std::numeric_limits<double>::infinity();
  }
  return hi;
}

std::uint64_t derive_seed(std::uint64_t global_seed, double T, int n_basis,
                          int restart) {
  std::uint64_t h = fnv1a64(&global_seed, sizeof(global_seed));
  const std::uint64_t tbits = std::bit_cast<std::uint64_t>(T);
  h = fnv1a64(&tbits, sizeof(tbits), h);
  const std::int64_t nb = n_basis, rs = restart;
  h = fnv1a64(&nb, sizeof(nb), h);
  h = fnv1a64(&rs, sizeof(rs), h);
  return splitmix64(h);
}

std::vector<double> random_init(int n_basis, const ParameterBounds& bounds,
                                std::uint64_t seed, double qubit_gap_ghz) {
  if (n_basis < 1) throw std::invalid_argument("random_init: need N >= 1");
  Rng rng(seed);
  std::vector<double> alpha(std::size_t(3 * n_basis));
  const double freq_lo = two_pi * 0.05;
  for (int i = 0; i < n_basis; ++i) {
    alpha[std::size_t(3 * i)] =
        rng.uniform(-0.1 * bounds.amp_max_gauss, 0.1 * bounds.amp_max_gauss);
    alpha[std::size_t(3 * i + 1)] =
        rng.log_uniform(freq_lo, bounds.freq_max_rad_ns);
    alpha[std::size_t(3 * i + 2)] = rng.uniform(0.0, two_pi);
  }
  // pin one component to the qubit transition
  alpha[1] = std::min(two_pi * qubit_gap_ghz, bounds.freq_max_rad_ns);
  return alpha;
}

OptimizationRecord lbfgs_minimize(const ControlProblem& problem,
                                  const OptimizerOptions& opts,
                                  std::uint64_t seed) {
  const auto t_start = std::chrono::steady_clock::now();
  const SpinSystem& sys = *problem.system;
  InversionObjective obj(sys, problem.T, problem.n_basis, opts.ramp_fraction,
                         opts.fast_tol, opts.frame_correction);

  lbfgs::Options core = opts.core;
  core.lower = opts.bounds.lower(problem.n_basis);
  core.upper = opts.bounds.upper(problem.n_basis);

  auto f = [&obj](std::span<const double> x, std::span<double> grad) -> double {
    try {
      if (grad.empty()) return obj.value(x);
      return obj.value_and_gradient(x, grad);
    } catch (const IntegrationError&) {
      // infeasible point (e.g. absurd amplitude); back the line search off
      std::fill(grad.begin(), grad.end(), 0.0);
      return std::numeric_limits<double>::infinity();
    }
  };

  const std::vector<double> alpha0 =
      random_init(problem.n_basis, opts.bounds, seed, sys.qubit_gap_ghz());
  const lbfgs::Result lr = lbfgs::minimize(f, alpha0, core);

  OptimizationRecord rec;
  rec.T = problem.T;
  rec.n_basis = problem.n_basis;
  rec.seed = seed;
  rec.alpha = lr.x;
  rec.infidelity_fast = lr.f;
  rec.infidelity = obj.value_at_tolerance(lr.x, opts.verify_tol);
  rec.iterations = lr.iterations;
  rec.termination = lbfgs::to_string(lr.termination);
  rec.history.reserve(lr.history.size());
  for (const auto& h : lr.history) rec.history.push_back({h.f, h.grad_inf});
  rec.max_amp_gauss =
      max_amplitude(PulseParams(lr.x), obj.envelope(), 8192);
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t_start)
                    .count();
  return rec;
}

std::size_t pick_best(const std::vector<OptimizationRecord>& records) {
  if (records.empty()) throw std::invalid_argument("pick_best: no records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& b = records[best];
    if (r.infidelity < b.infidelity ||
        (r.infidelity == b.infidelity && r.max_amp_gauss < b.max_amp_gauss))
      best = i;
  }
  return best;
}

MultistartResult multistart(const ControlProblem& problem,
                            const OptimizerOptions& opts, int restarts,
                            std::uint64_t global_seed, int jobs) {
  if (restarts < 1) throw std::invalid_argument("multistart: need restarts >= 1");
  jobs = std::max(1, jobs);

  MultistartResult out;
  out.records.resize(std::size_t(restarts));

  std::atomic<int> next{0};
  std::atomic<bool> interrupted{false};
  std::exception_ptr first_error;
  std::mutex error_mtx;

  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= restarts || interrupted.load()) return;
      try {
        const std::uint64_t seed =
            derive_seed(global_seed, problem.T, problem.n_basis, r);
        out.records[std::size_t(r)] = lbfgs_minimize(problem, opts, seed);
      } catch (...) {
        std::lock_guard lock(error_mtx);
        if (!first_error) first_error = std::current_exception();
        interrupted.store(true);
        return;
      }
    }
  };

  if (jobs == 1 || restarts == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(jobs, restarts); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  out.best_index = pick_best(out.records);
  return out;
}

nlohmann::json OptimizationRecord::to_json() const {
  nlohmann::json j;
  j["T_ns"] = T;
  j["N"] = n_basis;
  j["seed"] = seed;
  j["alpha"] = alpha;
  j["infidelity"] = infidelity;
  j["infidelity_fast"] = infidelity_fast;
  j["max_amp_G"] = max_amp_gauss;
  j["iterations"] = iterations;
  j["termination"] = termination;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : history) hist.push_back({h[0], h[1]});
  j["history"] = std::move(hist);
  return j;
}

OptimizationRecord OptimizationRecord::from_json(const nlohmann::json& j) {
  OptimizationRecord r;
  r.T = j.at("T_ns").get<double>();
  r.n_basis = j.at("N").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.alpha = j.at("alpha").get<std::vector<double>>();
  r.infidelity = j.at("infidelity").get<double>();
  r.infidelity_fast = j.at("infidelity_fast").get<double>();
  r.max_amp_gauss = j.at("max_amp_G").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.termination = j.at("termination").get<std::string>();
  for (const auto& h : j.at("history"))
    r.history.push_back({h.at(0).get<double>(), h.at(1).get<double>()});
  return r;
}

bool OptimizationRecord::operator==(const OptimizationRecord& other) const {
  return T == other.T && n_basis == other.n_basis && seed == other.seed &&
         alpha == other.alpha && infidelity == other.infidelity &&
         infidelity_fast == other.infidelity_fast &&
         max_amp_gauss == other.max_amp_gauss &&
         iterations == other.iterations && termination == other.termination &&
         history == other.history;
}

}  // namespace nvqoc
