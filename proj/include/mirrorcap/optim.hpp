#pragma once

// Small dense Levenberg-Marquardt with a central-difference Jacobian. Meant
// for problems with a handful of parameters.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace mirrorcap::optim {

struct LmOptions {
  int max_iterations = 100;
  double initial_lambda = 1e-3;
  double relative_tolerance = 1e-12;
};

struct LmResult {
  Eigen::VectorXd x;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
};

template <class ResidualFn>
Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                 Eigen::Index residual_count) {
  Eigen::MatrixXd jac(residual_count, x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const Eigen::VectorXd rp = fn(xp);
    xp[i] = x[i] - h;
    const Eigen::VectorXd rm = fn(xp);
    xp[i] = x[i];
    jac.col(i) = (rp - rm) / (2.0 * h);
  }
  return jac;
}

template <class ResidualFn>
LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd x, const LmOptions& opts = {}) {
  Eigen::VectorXd r = fn(x);
  double cost = 0.5 * r.squaredNorm();
  double lambda = opts.initial_lambda;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Eigen::MatrixXd jac = numeric_jacobian(fn, x, r.size());
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool improved = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd x_new = x + step;
      const Eigen::VectorXd r_new = fn(x_new);
      const double cost_new = 0.5 * r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        const double gain = cost - cost_new;
        x = x_new;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        if (gain <= opts.relative_tolerance * std::max(cost, 1e-300)) it = opts.max_iterations;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return {x, cost, it};
}

}  // namespace mirrorcap::optim
