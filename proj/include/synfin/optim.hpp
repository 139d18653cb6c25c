#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "synfin/types.hpp"

namespace synfin::optim {

using Objective = std::function<double(const Vector&)>;

struct MinimizeOptions {
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-6;  // on the infinity norm
  double value_tolerance = 1e-12;    // relative change between iterations
  double fd_step = 1e-6;
};

struct MinimizeResult {
  Vector x;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::string message;
};

/// Central-difference gradient with per-coordinate step h * max(1, |x_i|).
Vector numeric_gradient(const Objective& f, const Vector& x, double h);

/// Quasi-Newton minimization (BFGS inverse-Hessian update, Armijo
/// backtracking). Non-finite objective values are treated as infeasible and
/// shrink the step.
MinimizeResult bfgs(const Objective& f, Vector x0, const MinimizeOptions& options = {});

}  // namespace synfin::optim
