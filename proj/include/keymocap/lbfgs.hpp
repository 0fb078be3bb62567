#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "keymocap/error.hpp"

namespace keymocap {

template <typename Scalar>
struct LbfgsConfigT {
  int max_iterations = 30;
  int history = 10;
  Scalar wolfe_c1 = Scalar(1e-4);
  Scalar wolfe_c2 = Scalar(0.9);
  Scalar gradient_tolerance = Scalar(1e-8);  // on the max-norm of the gradient
  int max_line_search_steps = 25;

  void validate() const {
    if (!(Scalar(0) < wolfe_c1 && wolfe_c1 < wolfe_c2 && wolfe_c2 < Scalar(1)))
      throw ParameterError("Wolfe constants must satisfy 0 < c1 < c2 < 1");
    if (history < 1) throw ParameterError("L-BFGS history must be >= 1");
    if (max_iterations < 1) throw ParameterError("L-BFGS needs at least one iteration");
    if (max_line_search_steps < 1) throw ParameterError("line search needs at least one step");
    if (!(gradient_tolerance >= Scalar(0))) throw ParameterError("gradient tolerance must be >= 0");
  }
};
using LbfgsConfig = LbfgsConfigT<double>;

enum class Termination { Converged, Budget, LineSearchFailure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::Budget: return "budget";
    case Termination::LineSearchFailure: return "line-search-failure";
  }
  return "unknown";
}

/// Accepted step of the minimizer, kept so callers can audit the Wolfe conditions.
template <typename Scalar>
struct StepRecord {
  Scalar alpha;
  Scalar f_before;
  Scalar f_after;
  Scalar slope_before;  // g0 . d
  Scalar slope_after;   // g(x + alpha d) . d
};

template <typename Scalar>
struct SolveResultT {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gradient;
  Scalar value = Scalar(0);
  int iterations = 0;
  int evaluations = 0;
  Termination reason = Termination::Budget;
  std::vector<Scalar> trace;  // objective after each accepted iterate, starting with f(x0)
  std::vector<StepRecord<Scalar>> steps;
};
using SolveResult = SolveResultT<double>;

template <typename Scalar>
struct LineSearchResult {
  bool ok = false;
  Scalar alpha = Scalar(0);
  Scalar value = Scalar(0);
  Scalar slope = Scalar(0);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gradient;
  int evaluations = 0;
};

/// Limited-memory inverse Hessian approximation (two-loop recursion) with the
/// initial matrix gamma I, gamma = s.y / y.y of the newest pair.
template <typename Scalar>
class LbfgsHistory {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit LbfgsHistory(int capacity) : capacity_(capacity) {}

  /// Stores the pair if it has positive curvature; returns whether it was kept.
  bool push(const Vector& s, const Vector& y) {
    const Scalar sy = s.dot(y);
    if (!(sy > std::numeric_limits<Scalar>::epsilon() * y.squaredNorm())) return false;
    s_.push_back(s);
    y_.push_back(y);
    rho_.push_back(Scalar(1) / sy);
    if (static_cast<int>(s_.size()) > capacity_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
    return true;
  }

  void clear() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  int size() const { return static_cast<int>(s_.size()); }
  bool empty() const { return s_.empty(); }

  Scalar initial_scale() const {
    if (empty()) return Scalar(1);
    return s_.back().dot(y_.back()) / y_.back().squaredNorm();
  }

  /// H * v.
  Vector apply(const Vector& v) const {
    const int m = size();
    std::vector<Scalar> alpha(m);
    Vector q = v;
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho_[i] * s_[i].dot(q);
      q -= alpha[i] * y_[i];
    }
    Vector r = initial_scale() * q;
    for (int i = 0; i < m; ++i) {
      const Scalar beta = rho_[i] * y_[i].dot(r);
      r += (alpha[i] - beta) * s_[i];
    }
    return r;
  }

  const std::deque<Vector>& s() const { return s_; }
  const std::deque<Vector>& y() const { return y_; }

 private:
  int capacity_;
  std::deque<Vector> s_;
  std::deque<Vector> y_;
  std::deque<Scalar> rho_;
};

namespace detail {

/// Minimizer of the cubic matching values and slopes at a and b; falls back
/// to bisection when the interpolant has no interior minimum.
template <typename Scalar>
Scalar cubic_minimizer(Scalar a, Scalar fa, Scalar da, Scalar b, Scalar fb, Scalar db) {
  using std::abs;
  using std::sqrt;
  const Scalar d1 = da + db - Scalar(3) * (fa - fb) / (a - b);
  const Scalar disc = d1 * d1 - da * db;
  const Scalar mid = (a + b) / Scalar(2);
  if (!(disc >= Scalar(0))) return mid;
  const Scalar d2 = (b > a ? Scalar(1) : Scalar(-1)) * sqrt(disc);
  const Scalar denom = db - da + Scalar(2) * d2;
  if (denom == Scalar(0)) return mid;
  const Scalar t = b - (b - a) * (db + d2 - d1) / denom;
  if (!std::isfinite(static_cast<double>(t))) return mid;
  return t;
}

}  // namespace detail

/// Line search for a step satisfying the strong Wolfe conditions
///   f(x + a d) <= f0 + c1 a g0.d   and   |g(x + a d).d| <= c2 |g0.d|
/// by bracketing and cubic-interpolation zoom. Non-finite trial values are
/// treated as overshooting. Returns ok = false after max_line_search_steps
/// evaluations without an acceptable step.
template <typename Scalar, typename Objective>
LineSearchResult<Scalar> strong_wolfe_search(
    Objective&& objective, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& direction, Scalar f0,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& g0, Scalar alpha_init,
    const LbfgsConfigT<Scalar>& config) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using std::abs;
  const Scalar slope0 = g0.dot(direction);
  if (!(slope0 < Scalar(0))) throw DirectionError("line search direction is not a descent direction");

  const Scalar c1 = config.wolfe_c1;
  const Scalar c2 = config.wolfe_c2;
  LineSearchResult<Scalar> res;
  Vector trial_x;
  Vector trial_g(x.size());

  auto evaluate = [&](Scalar alpha, Scalar& f, Scalar& slope) {
    trial_x = x + alpha * direction;
    f = objective(trial_x, trial_g);
    ++res.evaluations;
    slope = trial_g.dot(direction);
    return std::isfinite(static_cast<double>(f)) && trial_g.allFinite();
  };
  auto accept = [&](Scalar alpha, Scalar f, Scalar slope) {
    res.ok = true;
    res.alpha = alpha;
    res.value = f;
    res.slope = slope;
    res.x = trial_x;
    res.gradient = trial_g;
  };
  auto sufficient = [&](Scalar alpha, Scalar f) { return f <= f0 + c1 * alpha * slope0; };
  auto curvature = [&](Scalar slope) { return abs(slope) <= -c2 * slope0; };

  // Zoom inside [lo, hi], where lo satisfies sufficient decrease with the
  // lowest value seen and the interval contains acceptable steps.
  auto zoom = [&](Scalar lo, Scalar f_lo, Scalar s_lo, Scalar hi, Scalar f_hi, Scalar s_hi,
                  bool hi_valid) {
    while (res.evaluations < config.max_line_search_steps) {
      const Scalar width = hi - lo;
      if (abs(width) <= std::numeric_limits<Scalar>::epsilon() * std::max(abs(lo), abs(hi)))
        return;
      Scalar alpha = hi_valid ? detail::cubic_minimizer(lo, f_lo, s_lo, hi, f_hi, s_hi)
                              : (lo + hi) / Scalar(2);
      const Scalar a_min = std::min(lo, hi) + Scalar(0.1) * abs(width);
      const Scalar a_max = std::max(lo, hi) - Scalar(0.1) * abs(width);
      if (!(alpha >= a_min && alpha <= a_max)) alpha = (lo + hi) / Scalar(2);

      Scalar f, slope;
      const bool finite = evaluate(alpha, f, slope);
      if (!finite || !sufficient(alpha, f) || f >= f_lo) {
        hi = alpha;
        f_hi = f;
        s_hi = slope;
        hi_valid = finite;
      } else {
        if (curvature(slope)) {
          accept(alpha, f, slope);
          return;
        }
        if (slope * (hi - lo) >= Scalar(0)) {
          hi = lo;
          f_hi = f_lo;
          s_hi = s_lo;
          hi_valid = true;
        }
        lo = alpha;
        f_lo = f;
        s_lo = slope;
      }
    }
  };

  Scalar alpha_prev = Scalar(0);
  Scalar f_prev = f0;
  Scalar s_prev = slope0;
  Scalar alpha = alpha_init;
  bool first = true;
  while (res.evaluations < config.max_line_search_steps) {
    Scalar f, slope;
    const bool finite = evaluate(alpha, f, slope);
    if (!finite || !sufficient(alpha, f) || (!first && f >= f_prev)) {
      zoom(alpha_prev, f_prev, s_prev, alpha, f, slope, finite);
      return res;
    }
    if (curvature(slope)) {
      accept(alpha, f, slope);
      return res;
    }
    if (slope >= Scalar(0)) {
      zoom(alpha, f, slope, alpha_prev, f_prev, s_prev, true);
      return res;
    }
    alpha_prev = alpha;
    f_prev = f;
    s_prev = slope;
    alpha *= Scalar(2);
    first = false;
  }
  return res;
}

/// Minimizes a smooth objective `Scalar f(const Vector& x, Vector& grad)`
/// with L-BFGS and a strong Wolfe line search. Accepted iterates never
/// increase the objective. When the line search fails the memory is dropped
/// and a steepest-descent step is tried once before stopping with the best
/// iterate so far.
template <typename Scalar, typename Objective>
SolveResultT<Scalar> lbfgs_minimize(Objective&& objective,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0,
                                    const LbfgsConfigT<Scalar>& config) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using std::sqrt;
  config.validate();

  SolveResultT<Scalar> res;
  res.x = x0;
  res.gradient.resize(x0.size());
  res.value = objective(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(static_cast<double>(res.value)) || !res.gradient.allFinite())
    throw InputError("objective is not finite at the starting point");
  res.trace.push_back(res.value);

  LbfgsHistory<Scalar> history(config.history);
  auto converged = [&] {
    return res.gradient.size() == 0 ||
           res.gradient.template lpNorm<Eigen::Infinity>() <= config.gradient_tolerance;
  };

  for (int k = 0; k < config.max_iterations; ++k) {
    if (converged()) {
      res.reason = Termination::Converged;
      return res;
    }
    LineSearchResult<Scalar> ls;
    for (int attempt = 0; attempt < 2; ++attempt) {
      Vector direction;
      Scalar alpha_init(1);
      if (!history.empty()) direction = -history.apply(res.gradient);
      if (history.empty() || !(direction.dot(res.gradient) < Scalar(0))) {
        history.clear();
        direction = -res.gradient;
        alpha_init = std::min(Scalar(1), Scalar(1) / res.gradient.norm());
      }
      ls = strong_wolfe_search<Scalar>(objective, res.x, direction, res.value, res.gradient,
                                       alpha_init, config);
      res.evaluations += ls.evaluations;
      if (ls.ok) {
        res.steps.push_back({ls.alpha, res.value, ls.value, res.gradient.dot(direction), ls.slope});
        break;
      }
      if (history.empty()) break;
      history.clear();
    }
    if (!ls.ok) {
      res.reason = Termination::LineSearchFailure;
      return res;
    }
    history.push(ls.x - res.x, ls.gradient - res.gradient);
    res.x = std::move(ls.x);
    res.gradient = std::move(ls.gradient);
    res.value = ls.value;
    res.trace.push_back(res.value);
    res.iterations = k + 1;
  }
  res.reason = converged() ? Termination::Converged : Termination::Budget;
  return res;
}

/// Central-difference gradient of a value-only function.
template <typename Scalar, typename Function>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> finite_diff_gradient(
    Function&& f, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, Scalar step) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad(x.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const Scalar fp = f(probe);
    probe(i) = x(i) - step;
    const Scalar fm = f(probe);
    probe(i) = x(i);
    grad(i) = (fp - fm) / (Scalar(2) * step);
  }
  return grad;
}

}  // namespace keymocap
