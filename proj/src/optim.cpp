#include "synfin/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace synfin::optim {

Vector numeric_gradient(const Objective& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    probe(i) = x(i) + step;
    const double up = f(probe);
    probe(i) = x(i) - step;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * step);
  }
  return g;
}

MinimizeResult bfgs(const Objective& f, Vector x0, const MinimizeOptions& opt) {
  const Eigen::Index n = x0.size();
  MinimizeResult res;
  res.x = std::move(x0);
  res.value = f(res.x);
  if (!std::isfinite(res.value)) {
    res.message = "objective not finite at the starting point";
    return res;
  }
  Vector g = numeric_gradient(f, res.x, opt.fd_step);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (!g.allFinite()) {
      res.message = "gradient not finite";
      return res;
    }
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    Vector dir = -h_inv * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }

    double step = 1.0;
    Vector x_new;
    double f_new = 0.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = res.x + step * dir;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent along the quasi-Newton direction; treat a tiny gradient
      // relative to the objective scale as convergence.
      res.converged = g.lpNorm<Eigen::Infinity>() < 1e-3 * std::max(1.0, std::abs(res.value));
      res.message = "line search failed";
      return res;
    }

    const Vector g_new = numeric_gradient(f, x_new, opt.fd_step);
    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    const double f_old = res.value;
    res.x = x_new;
    res.value = f_new;
    g = g_new;

    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    if (std::abs(f_old - f_new) <= opt.value_tolerance * std::max(1.0, std::abs(f_new))) {
      res.converged = true;
      res.message = "objective tolerance reached";
      ++res.iterations;
      return res;
    }
  }
  res.message = "iteration limit reached";
  return res;
}

}  // namespace synfin::optim
