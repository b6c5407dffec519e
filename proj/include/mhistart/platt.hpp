#pragma once

// Platt calibration: P(moving | f) = 1 / (1 + exp(a * f + b)) over SVM
// decision values, fitted by Newton's method with backtracking on the
// regularised-target log-likelihood (Lin, Lin & Weng formulation).

#include <cmath>
#include <span>
#include <string>

#include "mhistart/errors.hpp"
#include "mhistart/svm.hpp"

namespace mhistart {

struct ProbabilityPair {
  double p_waiting = 0.5;
  double p_moving = 0.5;
};

struct PlattCalibration {
  double a = 0.0;
  double b = 0.0;
  int iterations = 0;

  double p_moving(double decision) const {
    const double z = a * decision + b;
    if (z >= 0.0) {
      const double e = std::exp(-z);
      return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
  }

  ProbabilityPair probabilities(double decision) const {
    const double pm = p_moving(decision);
    return {1.0 - pm, pm};
  }
};

struct PlattOptions {
  int max_iterations = 100;
  double gradient_tol = 1e-8;
  double min_step = 1e-10;
  double hessian_ridge = 1e-12;
};

inline PlattCalibration fit_platt(std::span<const double> decisions,
                                  std::span<const int> labels,
                                  const PlattOptions& opt = {}) {
  if (decisions.size() != labels.size())
    throw DimensionMismatch("decisions and labels differ in length");
  double n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) ++n_pos;
    else if (y == -1) ++n_neg;
    else throw InvalidArgument("labels must be -1 or +1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw DegenerateData("Platt fit needs both classes");

  const double hi_target = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo_target = 1.0 / (n_neg + 2.0);
  const std::size_t n = decisions.size();
  auto target = [&](std::size_t i) { return labels[i] == 1 ? hi_target : lo_target; };

  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = decisions[i] * a + b;
      const double t = target(i);
      f += z >= 0.0 ? t * z + std::log1p(std::exp(-z))
                    : (t - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  PlattCalibration cal;
  cal.a = 0.0;
  cal.b = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double fval = objective(cal.a, cal.b);

  for (int it = 0; it < opt.max_iterations; ++it) {
    double h11 = opt.hessian_ridge, h22 = opt.hessian_ridge, h21 = 0.0;
    double g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = decisions[i] * cal.a + cal.b;
      double p, q;  // p = P(moving), q = 1 - p
      if (z >= 0.0) {
        const double e = std::exp(-z);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(z);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      const double f = decisions[i];
      h11 += f * f * d2;
      h22 += d2;
      h21 += f * d2;
      const double d1 = target(i) - p;
      g1 += f * d1;
      g2 += d1;
    }
    if (std::hypot(g1, g2) < opt.gradient_tol) {
      cal.iterations = it;
      return cal;
    }

    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;

    double step = 1.0;
    bool accepted = false;
    while (step >= opt.min_step) {
      const double na = cal.a + step * da;
      const double nb = cal.b + step * db;
      const double nf = objective(na, nb);
      const bool armijo = nf < fval + 1e-4 * step * gd;
      // At the optimum the decrease drops below summation round-off; a full
      // Newton step that does not increase the objective is kept.
      const bool roundoff = step == 1.0 && nf <= fval + 1e-13 * std::max(1.0, std::abs(fval));
      if (armijo || roundoff) {
        cal.a = na;
        cal.b = nb;
        fval = nf;
        accepted = true;
        break;
      }
      step /= 2.0;
    }
    if (!accepted) {
      throw NonConvergence("Platt line search failed at iteration " +
                           std::to_string(it) + " (gradient norm " +
                           std::to_string(std::hypot(g1, g2)) + ")");
    }
  }
  throw NonConvergence("Platt fit did not reach gradient norm " +
                       std::to_string(opt.gradient_tol) + " within " +
                       std::to_string(opt.max_iterations) + " iterations");
}

inline ProbabilityPair predict_proba(const LinearSvmModel& model,
                                     const PlattCalibration& calib,
                                     std::span<const double> x) {
  return calib.probabilities(model.decision(x));
}

}  // namespace mhistart
