#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvqoc::lbfgs {

enum class Termination { converged_grad, converged_obj, max_iterations, linesearch_fail };

const char* to_string(Termination t);
Termination termination_from_string(const std::string& s);

struct Options {
  int max_iterations = 1000;
  double grad_inf_tol = 1e-9;   // on the projected gradient
  double rel_obj_tol = 1e-8;
  int memory = 10;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 40;
  std::vector<double> lower, upper;  // empty = unbounded; else per-coordinate box
  std::function<bool()> should_stop; // cooperative cancellation, checked per iteration
};

struct IterationInfo {
  double f;
  double grad_inf;
};

struct Result {
  std::vector<double> x;
  double f = 0.0;
  int iterations = 0;
  Termination termination = Termination::max_iterations;
  std::vector<IterationInfo> history;
};

// Raised when Options::should_stop fires; the caller owns recovery.
struct Interrupted : std::runtime_error {
  Interrupted() : std::runtime_error("optimization interrupted") {}
};

// f(x, grad): returns the objective; fills `grad` when non-empty. A
// non-finite return is treated as an infeasible trial point, which the
// backtracking line search steps away from.
using Objective =
    std::function<double(std::span<const double>, std::span<double>)>;

// Two-loop-recursion L-BFGS with Armijo backtracking, bounds handled by
// projection onto the box. Accepted objective values are non-increasing.
// Line-search failure returns the best point seen, not an exception.
Result minimize(const Objective& f, std::vector<double> x0, const Options& opt);

}  // namespace nvqoc::lbfgs
