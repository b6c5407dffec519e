#pragma once

// Linear two-class SVM with an unregularised bias:
//
//   min_{w,b}  0.5 * |w|^2 + sum_i C_i * max(0, 1 - y_i (w . x_i + b))
//
// For a fixed bias the problem is a bias-free SVM with shifted margins,
// solved in the dual by coordinate descent (Hsieh et al. style). The optimal
// value g(b) of that inner problem is convex in b, so the outer loop is a
// bracketed golden-section search over b. A bias-as-feature dual solve gives
// the starting point.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mhistart/errors.hpp"

namespace mhistart {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labelled descriptors; labels are -1 (waiting) or +1 (moving).
struct TrainSet {
  RowMatrix descriptors;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(descriptors.cols()); }

  void validate() const {
    if (static_cast<std::size_t>(descriptors.rows()) != labels.size())
      throw DimensionMismatch("descriptor rows and labels differ in count");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) {
      if (y == 1) ++pos;
      else if (y == -1) ++neg;
      else throw InvalidArgument("labels must be -1 or +1");
    }
    if (pos == 0 || neg == 0)
      throw DegenerateData("training data needs both classes (have " +
                           std::to_string(pos) + " positive, " +
                           std::to_string(neg) + " negative)");
  }

  static TrainSet from_rows(const std::vector<std::vector<double>>& rows,
                            std::vector<int> labels) {
    TrainSet s;
    const std::size_t d = rows.empty() ? 0 : rows.front().size();
    s.descriptors.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) throw DimensionMismatch("ragged descriptor rows");
      for (std::size_t j = 0; j < d; ++j)
        s.descriptors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    s.labels = std::move(labels);
    return s;
  }
};

struct LinearSvmModel {
  std::vector<double> weights;
  double bias = 0.0;
  double c_param = 1.0;

  double decision(std::span<const double> x) const {
    if (x.size() != weights.size())
      throw DimensionMismatch("descriptor length " + std::to_string(x.size()) +
                              " != model length " +
                              std::to_string(weights.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
    return s + bias;
  }
};

struct SvmOptions {
  double c = 0.03125;
  double tol = 1e-4;      // relative objective accuracy
  bool balanced = false;  // per-class C scaled by inverse class frequency
  std::uint64_t seed = 1;
  int max_outer = 200;
  int max_inner_epochs = 1000;
};

struct SvmTrainReport {
  std::vector<double> objective;  // incumbent primal objective per outer epoch
  int outer_epochs = 0;
  int inner_epochs = 0;
  bool converged = false;
};

/// Per-sample box bounds C_i.
inline std::vector<double> sample_costs(const TrainSet& data, double c,
                                        bool balanced) {
  std::vector<double> costs(data.size(), c);
  if (balanced) {
    std::size_t pos = 0;
    for (int y : data.labels) pos += y == 1 ? 1 : 0;
    const double n = static_cast<double>(data.size());
    const double cp = c * n / (2.0 * static_cast<double>(pos));
    const double cn = c * n / (2.0 * static_cast<double>(data.size() - pos));
    for (std::size_t i = 0; i < costs.size(); ++i)
      costs[i] = data.labels[i] == 1 ? cp : cn;
  }
  return costs;
}

inline double svm_primal_objective(const TrainSet& data,
                                   std::span<const double> costs,
                                   const Eigen::VectorXd& w, double b) {
  const Eigen::VectorXd margins = data.descriptors * w;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double m = data.labels[i] * (margins(static_cast<Eigen::Index>(i)) + b);
    loss += costs[i] * std::max(0.0, 1.0 - m);
  }
  return 0.5 * w.squaredNorm() + loss;
}

namespace detail {

/// Dual coordinate descent for min 0.5|w|^2 + sum C_i max(0, e_i - y_i w.x_i)
/// with e_i = 1 - y_i * b, optionally with the bias appended as a feature of
/// value 1 (then the bias is regularised and solved for jointly).
class DualCoordinateDescent {
 public:
  DualCoordinateDescent(const TrainSet& data, std::vector<double> costs,
                        std::uint64_t seed)
      : data_(data),
        costs_(std::move(costs)),
        alpha_(data.size(), 0.0),
        w_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.dim()))),
        qii_(data.size()),
        rng_(seed) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      qii_[i] = data.descriptors.row(static_cast<Eigen::Index>(i)).squaredNorm();
    }
  }

  const Eigen::VectorXd& w() const { return w_; }
  double feature_bias() const { return wb_; }
  int epochs() const { return epochs_; }

  /// Solves the bias-as-feature problem; returns its bias.
  double solve_augmented(double gap_tol, int max_epochs) {
    augmented_ = true;
    solve(0.0, gap_tol, max_epochs);
    augmented_ = false;
    const double b = wb_;
    wb_ = 0.0;
    return b;
  }

  /// Minimises the fixed-bias problem warm-started from the current duals;
  /// returns the primal objective at (w, b).
  double solve_fixed_bias(double b, double gap_tol, int max_epochs) {
    solve(b, gap_tol, max_epochs);
    return primal_;
  }

 private:
  // Coordinate passes with shrinking: variables stuck at a bound whose
  // projected gradient points outward are dropped from the active set until
  // the active problem is solved to pg_eps, then everything is reactivated.
  // The full duality gap is the only stopping test.
  void solve(double b, double gap_tol, int max_epochs) {
    const std::size_t n = alpha_.size();
    active_.resize(n);
    for (std::size_t i = 0; i < n; ++i) active_[i] = i;
    double pg_max_old = std::numeric_limits<double>::infinity();
    double pg_min_old = -pg_max_old;
    double pg_eps = 0.1;
    if (relative_gap(b) <= gap_tol) return;
    for (int e = 0; e < max_epochs; ++e) {
      const auto [pg_max, pg_min] = epoch(b, pg_max_old, pg_min_old);
      const bool active_solved = pg_max - pg_min <= pg_eps;
      if (active_solved || (e + 1) % 20 == 0) {
        if (relative_gap(b) <= gap_tol) return;
      }
      if (active_solved) {
        if (active_.size() == n) pg_eps = std::max(pg_eps * 0.1, 1e-12);
        active_.resize(n);
        for (std::size_t i = 0; i < n; ++i) active_[i] = i;
        pg_max_old = std::numeric_limits<double>::infinity();
        pg_min_old = -pg_max_old;
        continue;
      }
      pg_max_old = pg_max > 0.0 ? pg_max : std::numeric_limits<double>::infinity();
      pg_min_old = pg_min < 0.0 ? pg_min : -std::numeric_limits<double>::infinity();
    }
    relative_gap(b);
  }

  /// One shuffled pass over the active set; returns the extreme projected
  /// gradients seen.
  std::pair<double, double> epoch(double b, double pg_max_old, double pg_min_old) {
    ++epochs_;
    for (std::size_t i = active_.size(); i > 1; --i) {
      std::swap(active_[i - 1], active_[rng_() % i]);
    }
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    std::size_t k = 0;
    while (k < active_.size()) {
      const std::size_t i = active_[k];
      const auto row = data_.descriptors.row(static_cast<Eigen::Index>(i));
      const double y = data_.labels[i];
      const double q = qii_[i] + (augmented_ ? 1.0 : 0.0);
      const double e = augmented_ ? 1.0 : 1.0 - y * b;
      const double ci = costs_[i];
      const double a_old = alpha_[i];
      const double grad = y * (row.dot(w_) + (augmented_ ? wb_ : 0.0)) - e;
      double pg = grad;
      if (a_old <= 0.0) {
        if (grad > pg_max_old) {
          active_[k] = active_.back();
          active_.pop_back();
          continue;
        }
        pg = std::min(grad, 0.0);
      } else if (a_old >= ci) {
        if (grad < pg_min_old) {
          active_[k] = active_.back();
          active_.pop_back();
          continue;
        }
        pg = std::max(grad, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      ++k;
      if (pg == 0.0) continue;
      const double a_new = q > 0.0 ? std::clamp(a_old - grad / q, 0.0, ci) : (grad < 0.0 ? ci : 0.0);
      const double delta = (a_new - a_old) * y;
      if (delta != 0.0) {
        w_.noalias() += delta * row.transpose();
        if (augmented_) wb_ += delta;
        alpha_[i] = a_new;
      }
    }
    if (active_.empty()) return {0.0, 0.0};
    return {pg_max, pg_min};
  }

  /// (primal - dual) / max(primal, tiny); caches the primal value.
  double relative_gap(double b) {
    const Eigen::VectorXd wx = data_.descriptors * w_;
    double loss = 0.0, lin = 0.0;
    const double bias = augmented_ ? wb_ : b;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double y = data_.labels[i];
      const double m = y * (wx(static_cast<Eigen::Index>(i)) + bias);
      loss += costs_[i] * std::max(0.0, 1.0 - m);
      lin += alpha_[i] * (augmented_ ? 1.0 : 1.0 - y * b);
    }
    const double reg = 0.5 * (w_.squaredNorm() + (augmented_ ? wb_ * wb_ : 0.0));
    primal_ = reg + loss;
    const double dual = lin - reg;
    return (primal_ - dual) / std::max(std::abs(primal_), 1e-300);
  }

  const TrainSet& data_;
  std::vector<double> costs_;
  std::vector<double> alpha_;
  Eigen::VectorXd w_;
  double wb_ = 0.0;
  bool augmented_ = false;
  std::vector<double> qii_;
  std::vector<std::size_t> active_;
  std::mt19937_64 rng_;
  double primal_ = 0.0;
  int epochs_ = 0;
};

}  // namespace detail

/// Trains the linear SVM. The returned report lists the incumbent primal
/// objective after every outer epoch; the list is non-increasing.
inline LinearSvmModel train_svm(const TrainSet& data, const SvmOptions& opt,
                                SvmTrainReport* report = nullptr) {
  if (!(opt.c > 0.0)) throw InvalidArgument("SVM C must be positive");
  if (!(opt.tol > 0.0)) throw InvalidArgument("SVM tolerance must be positive");
  data.validate();

  const auto costs = sample_costs(data, opt.c, opt.balanced);
  detail::DualCoordinateDescent cd(data, costs, opt.seed);
  const double inner_tol = opt.tol * 0.1;
  const double b0 = cd.solve_augmented(inner_tol, opt.max_inner_epochs);

  struct Point {
    double b, f;
  };
  Eigen::VectorXd best_w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.dim()));
  double best_b = b0;
  double best_f = std::numeric_limits<double>::infinity();
  auto eval = [&](double b) {
    const double f = cd.solve_fixed_bias(b, inner_tol, opt.max_inner_epochs);
    if (f < best_f) {
      best_f = f;
      best_b = b;
      best_w = cd.w();
    }
    return Point{b, f};
  };

  SvmTrainReport rep;
  // Bracket the minimiser of the convex function g(b).
  constexpr double kGolden = 1.618033988749895;
  const double h0 = 0.1 * (1.0 + std::abs(b0));
  Point a = eval(b0);
  Point m = eval(b0 + h0);
  if (m.f > a.f) std::swap(a, m);
  Point c = eval(m.b + kGolden * (m.b - a.b));
  for (int i = 0; i < 200 && c.f < m.f; ++i) {
    a = m;
    m = c;
    c = eval(m.b + kGolden * (m.b - a.b));
  }
  if (a.b > c.b) std::swap(a, c);

  // Golden-section refinement. With a < m < c and f(m) <= f(a), f(c), the
  // secants through the incumbent bound g from below on [a, c].
  constexpr double kInvGolden = 0.381966011250105;
  bool converged = false;
  int outer = 0;
  for (; outer < opt.max_outer; ++outer) {
    const double left_slope = (m.f - a.f) / (m.b - a.b);
    const double right_slope = (c.f - m.f) / (c.b - m.b);
    const double lower = std::min(m.f + left_slope * (c.b - m.b),
                                  m.f - right_slope * (m.b - a.b));
    if (m.f - lower <= opt.tol * std::max(std::abs(m.f), 1e-12) ||
        c.b - a.b <= 1e-12 * (1.0 + std::abs(m.b))) {
      converged = true;
      break;
    }
    const bool right_larger = (c.b - m.b) > (m.b - a.b);
    const double x = right_larger ? m.b + kInvGolden * (c.b - m.b)
                                  : m.b - kInvGolden * (m.b - a.b);
    const Point p = eval(x);
    if (p.f < m.f) {
      if (right_larger) a = m;
      else c = m;
      m = p;
    } else {
      if (right_larger) c = p;
      else a = p;
    }
    rep.objective.push_back(best_f);
  }
  rep.outer_epochs = outer;
  rep.inner_epochs = cd.epochs();
  rep.converged = converged;
  if (report) *report = std::move(rep);

  LinearSvmModel model;
  model.weights.assign(best_w.data(), best_w.data() + best_w.size());
  model.bias = best_b;
  model.c_param = opt.c;
  return model;
}

}  // namespace mhistart
