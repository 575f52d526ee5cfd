#include "nedspec/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nedspec/envelope.hpp"

namespace ned {

double ScaledMatrix::log_norm() const {
  double n = spectral_norm(m);
  if (n == 0.0) return -std::numeric_limits<double>::infinity();
  return log_scale + std::log(n);
}

Matrix ScaledMatrix::dense() const {
  if (log_scale > defaults::overflow_log_norm) {
    throw Error("flow", "transition value overflows (log scale " + std::to_string(log_scale) + ")");
  }
  return std::exp(log_scale) * m;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
constexpr double E1 = 35.0 / 384 - 5179.0 / 57600, E3 = 500.0 / 1113 - 7571.0 / 16695,
                 E4 = 125.0 / 192 - 393.0 / 640, E5 = -2187.0 / 6784 + 92097.0 / 339200,
                 E6 = 11.0 / 84 - 187.0 / 2100, E7 = -1.0 / 40;
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;

}  // namespace

Matrix integrate_ode(const std::function<Matrix(double, const Matrix&)>& f, Matrix y, double t0,
                     double t1, double abs_tol, double rel_tol, IntegratorStats* stats) {
  const double span = t1 - t0;
  if (span == 0.0) return y;
  const double dir = span > 0 ? 1.0 : -1.0;
  const double done_tol = 1e-14 * (1 + std::max(std::fabs(t0), std::fabs(t1)));
  double t = t0;
  double h = dir * std::min(0.1, std::fabs(span));
  Matrix k1 = f(t, y);
  while (dir * (t1 - t) > done_tol) {
    if (std::fabs(h) > std::fabs(t1 - t)) h = t1 - t;
    if (std::fabs(h) < 1e-14 * (1 + std::fabs(t))) {
      throw Error("flow", "integrator step underflow at t = " + std::to_string(t));
    }
    Matrix k2 = f(t + C2 * h, y + h * (A21 * k1));
    Matrix k3 = f(t + C3 * h, y + h * (A31 * k1 + A32 * k2));
    Matrix k4 = f(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
    Matrix k5 = f(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
    Matrix k6 = f(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
    Matrix y5 = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
    Matrix k7 = f(t + h, y5);
    Matrix err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);

    double err_ratio = 0.0;
    for (int r = 0; r < y.rows(); ++r) {
      for (int c = 0; c < y.cols(); ++c) {
        double scale = abs_tol + rel_tol * std::max(std::fabs(y(r, c)), std::fabs(y5(r, c)));
        err_ratio = std::max(err_ratio, std::fabs(err(r, c)) / scale);
      }
    }
    if (err_ratio <= 1.0) {
      t += h;
      y = std::move(y5);
      k1 = std::move(k7);
      if (stats) ++stats->steps;
    } else if (stats) {
      ++stats->rejected;
    }
    double factor = err_ratio > 0 ? 0.9 * std::pow(err_ratio, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
  }
  return y;
}

double integrate_scalar(const std::function<double(double)>& f, double t0, double t1,
                        double abs_tol, double rel_tol) {
  Matrix y0(1, 1);
  y0(0, 0) = 0.0;
  Matrix out = integrate_ode(
      [&f](double t, const Matrix&) {
        Matrix m(1, 1);
        m(0, 0) = f(t);
        return m;
      },
      y0, t0, t1, abs_tol, rel_tol);
  return out(0, 0);
}

TransitionOperator::TransitionOperator(GeneralSystem system, double abs_tol, double rel_tol,
                                       double checkpoint_dt)
    : system_(std::move(system)), abs_tol_(abs_tol), rel_tol_(rel_tol) {
  const int n = system_.n;
  // adaptive spacing: cap the log-range a single step can span, so decaying
  // entries stay relatively accurate inside every cached step
  grid_.push_back(0.0);
  const double dt_min = checkpoint_dt / 1024;
  while (grid_.back() < system_.horizon) {
    double t = grid_.back();
    double dt = std::min(checkpoint_dt, system_.horizon - t);
    for (int pass = 0; pass < 3; ++pass) {
      double a_max = 1e-6;
      for (double frac : {0.0, 0.5, 1.0}) {
        a_max = std::max(a_max, spectral_norm(system_.A(t + frac * dt)));
      }
      double cap = defaults::checkpoint_log_budget / a_max;
      if (dt <= cap) break;
      dt = std::max(cap, dt_min);
    }
    grid_.push_back(std::min(t + dt, system_.horizon));
  }

  const size_t steps = grid_.size() - 1;
  step_.reserve(steps);
  step_inv_.reserve(steps);
  step_inv_residual_.reserve(steps);
  for (size_t k = 0; k < steps; ++k) {
    Matrix m = integrate_span(Matrix::Identity(n, n), grid_[k], grid_[k + 1]);
    Matrix inv = m.inverse();
    step_inv_residual_.push_back((m * inv - Matrix::Identity(n, n)).norm());
    step_.push_back(std::move(m));
    step_inv_.push_back(std::move(inv));
  }
}

Matrix TransitionOperator::integrate_span(const Matrix& y0, double t0, double t1) const {
  IntegratorStats st;
  Matrix out = integrate_ode(
      [this](double t, const Matrix& y) -> Matrix { return system_.A(t) * y; }, y0, t0, t1,
      abs_tol_, rel_tol_, &st);
  steps_.fetch_add(st.steps, std::memory_order_relaxed);
  rejected_.fetch_add(st.rejected, std::memory_order_relaxed);
  return out;
}

namespace {

// keep the stored factor near unit scale; integration tolerances and
// products both assume O(1) entries
void renormalize(ScaledMatrix& s) {
  double n = s.m.cwiseAbs().maxCoeff();
  if (n > 0 && (n > 1e3 || n < 1e-3)) {
    s.m /= n;
    s.log_scale += std::log(n);
  }
}

}  // namespace

ScaledMatrix TransitionOperator::compose(double t, double s) const {
  const int n = dim();
  if (t == s) return {Matrix::Identity(n, n), 0.0};

  // first checkpoint index >= x
  auto index_above = [this](double x) {
    return static_cast<int>(std::lower_bound(grid_.begin(), grid_.end(), x - 1e-12) -
                            grid_.begin());
  };
  // last checkpoint index <= x
  auto index_below = [this](double x) {
    int k = static_cast<int>(std::upper_bound(grid_.begin(), grid_.end(), x + 1e-12) -
                             grid_.begin()) - 1;
    return std::max(k, 0);
  };

  ScaledMatrix acc{Matrix::Identity(n, n), 0.0};
  if (t > s) {
    int k_begin = std::min(index_above(s), static_cast<int>(grid_.size()) - 1);
    int k_end = index_below(t);
    if (k_end <= k_begin) {
      acc.m = integrate_span(acc.m, s, t);
    } else {
      acc.m = integrate_span(acc.m, s, grid_[k_begin]);
      renormalize(acc);
      for (int k = k_begin; k < k_end; ++k) {
        acc.m = step_[k] * acc.m;
        renormalize(acc);
      }
      acc.m = integrate_span(acc.m, grid_[k_end], t);
    }
  } else {
    int k_begin = index_below(s);
    int k_end = std::min(index_above(t), static_cast<int>(grid_.size()) - 1);
    if (k_begin <= k_end) {
      acc.m = integrate_span(acc.m, s, t);
    } else {
      acc.m = integrate_span(acc.m, s, grid_[k_begin]);
      renormalize(acc);
      for (int k = k_begin - 1; k >= k_end; --k) {
        if (step_inv_residual_[k] > defaults::inverse_residual_tol) {
          // conditioning fallback: integrate the whole remaining span
          acc.m = integrate_span(acc.m, grid_[k + 1], t);
          renormalize(acc);
          return acc;
        }
        acc.m = step_inv_[k] * acc.m;
        renormalize(acc);
      }
      acc.m = integrate_span(acc.m, grid_[k_end], t);
    }
  }
  renormalize(acc);
  return acc;
}

ScaledMatrix TransitionOperator::transition_scaled(double t, double s) const {
  if (t < 0 || t > horizon() || s < 0 || s > horizon()) {
    throw Error("flow", "transition time outside [0, horizon]");
  }
  return compose(t, s);
}

Matrix TransitionOperator::transition(double t, double s) const {
  return transition_scaled(t, s).dense();
}

double TransitionOperator::log_norm_transition(double t, double s) const {
  return transition_scaled(t, s).log_norm();
}

ScaledMatrix TransitionOperator::apply_scaled(double t, double s, const Matrix& b) const {
  ScaledMatrix phi = transition_scaled(t, s);
  ScaledMatrix out{phi.m * b, phi.log_scale};
  renormalize(out);
  return out;
}

std::vector<std::array<double, 3>> TransitionOperator::checkpoint_diagnostics() const {
  std::vector<std::array<double, 3>> rows;
  rows.reserve(grid_.size());
  const int n = dim();
  ScaledMatrix acc{Matrix::Identity(n, n), 0.0};
  for (size_t k = 0; k < grid_.size(); ++k) {
    if (k > 0) {
      acc.m = step_[k - 1] * acc.m;
      renormalize(acc);
    }
    auto svd = acc.m.jacobiSvd();
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(n - 1);
    double cond = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
    rows.push_back({grid_[k], acc.log_scale + std::log(smax), cond});
  }
  return rows;
}

double TransitionOperator::cocycle_defect(const std::vector<std::array<double, 3>>& triples) const {
  double worst = 0.0;
  for (const auto& [t, s, tau] : triples) {
    ScaledMatrix direct = transition_scaled(t, tau);
    ScaledMatrix left = transition_scaled(t, s);
    ScaledMatrix right = transition_scaled(s, tau);
    double scale = left.log_scale + right.log_scale - direct.log_scale;
    Matrix composed = std::exp(scale) * (left.m * right.m);
    double rel = (composed - direct.m).norm() / direct.m.norm();
    worst = std::max(worst, rel);
  }
  return worst;
}

ScalarFlow::ScalarFlow(const LinearSystem& system, double tol)
    : ScalarFlow([mf = system.A](double t) { return mf.entry(0, 0).eval(t); }, system.horizon, tol) {
  if (system.dim() != 1) throw Error("flow", "ScalarFlow needs a one-dimensional system");
}

ScalarFlow::ScalarFlow(const GeneralSystem& system, double tol)
    : ScalarFlow([a = system.A](double t) { return a(t)(0, 0); }, system.horizon, tol) {
  if (system.n != 1) throw Error("flow", "ScalarFlow needs a one-dimensional system");
}

ScalarFlow::ScalarFlow(std::function<double(double)> rhs, double horizon, double tol)
    : rhs_(std::move(rhs)), horizon_(horizon), tol_(tol) {
  const int steps = std::max(1, static_cast<int>(std::ceil(horizon_ / defaults::checkpoint_dt)));
  dt_ = horizon_ / steps;
  q_.resize(steps + 1);
  q_[0] = 0.0;
  for (int k = 0; k < steps; ++k) {
    q_[k + 1] = q_[k] + integrate_scalar(rhs_, k * dt_, (k + 1) * dt_, tol_, tol_);
  }
}

double ScalarFlow::cumulative(double t) const {
  if (t < -1e-9 || t > horizon_ * (1 + 1e-12) + 1e-9) {
    throw Error("flow", "cumulative integral queried outside [0, horizon]");
  }
  t = std::clamp(t, 0.0, horizon_);
  int k = std::clamp(static_cast<int>(std::round(t / dt_)), 0, static_cast<int>(q_.size()) - 1);
  double base = k * dt_;
  if (t == base) return q_[k];
  return q_[k] + integrate_scalar(rhs_, base, t, tol_, tol_);
}

double ScalarFlow::log_transition(double t, double s) const {
  return cumulative(t) - cumulative(s);
}

double scalar_log_transition(const LinearSystem& system, double t, double s) {
  if (system.dim() != 1) throw Error("flow", "scalar_log_transition needs dimension 1");
  const Expr& a = system.A.entry(0, 0);
  return integrate_scalar([&a](double tau) { return a.eval(tau); }, s, t, 1e-12, 1e-12);
}

ScalarPairOracle::ScalarPairOracle(const ScalarFlow& flow, double c_max, int c_steps,
                                   double scan_dt)
    : c_max_(c_max) {
  const double horizon = flow.horizon();
  std::vector<double> times;
  // boundaries and a coarse lattice to anchor monotone tilts
  const int lattice = 64;
  for (int i = 0; i <= lattice; ++i) times.push_back(horizon * i / lattice);

  // scan a(tau) once, then locate a = c crossings for every tilt level
  const int scan = std::max(64, static_cast<int>(std::ceil(horizon / scan_dt)));
  std::vector<double> ts(scan + 1), as(scan + 1);
  for (int i = 0; i <= scan; ++i) {
    ts[i] = horizon * i / scan;
    as[i] = flow.rhs(ts[i]);
  }
  for (int j = 0; j < c_steps; ++j) {
    double c = -c_max_ + 2 * c_max_ * j / (c_steps - 1);
    for (int i = 0; i < scan; ++i) {
      double f0 = as[i] - c, f1 = as[i + 1] - c;
      if (f0 == 0) times.push_back(ts[i]);
      if ((f0 < 0 && f1 > 0) || (f0 > 0 && f1 < 0)) {
        double lo = ts[i], hi = ts[i + 1];
        double flo = f0;
        for (int it = 0; it < 40; ++it) {
          double mid = 0.5 * (lo + hi);
          double fm = flow.rhs(mid) - c;
          if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        times.push_back(0.5 * (lo + hi));
      }
    }
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(),
                          [](double a, double b) { return std::fabs(a - b) < 1e-9; }),
              times.end());
  t_ = std::move(times);
  q_.reserve(t_.size());
  for (double t : t_) q_.push_back(flow.cumulative(t));
}

double ScalarPairOracle::max_forward(double u, double v) const {
  double best = 0.0;  // t = s
  double run = -std::numeric_limits<double>::infinity();
  for (size_t i = t_.size(); i-- > 0;) {
    run = std::max(run, q_[i] + u * t_[i]);  // sup over t >= t_[i]
    best = std::max(best, run - (q_[i] + v * t_[i]));
  }
  return best;
}

double ScalarPairOracle::max_backward(double u, double v) const {
  double best = 0.0;
  double run = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < t_.size(); ++i) {
    run = std::max(run, q_[i] + u * t_[i]);  // sup over t <= t_[i]
    best = std::max(best, run - (q_[i] + v * t_[i]));
  }
  return best;
}

GrowthEstimate fit_growth_scalar(const ScalarPairOracle& oracle, double ceiling) {
  const double eps_hi = 64.0;
  auto value = [&oracle](double a, double eps) {
    return std::max(oracle.max_forward(-a, -a + eps), oracle.max_backward(a - eps, a));
  };
  auto min_over_eps = [&](double a) {
    return minimize_convex([&](double e) { return value(a, e); }, 0.0, eps_hi);
  };
  double a_hi = oracle.tilt_limit();
  if (min_over_eps(a_hi) > ceiling) a_hi *= 4;  // defensive; tilts beyond have no interior ridge
  double a;
  if (min_over_eps(0.0) <= ceiling) {
    a = 0.0;
  } else {
    double lo = 0.0, hi = a_hi;
    for (int i = 0; i < 60; ++i) {
      double mid = 0.5 * (lo + hi);
      if (min_over_eps(mid) <= ceiling) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    a = hi;
  }
  // smallest eps with value(a, eps) <= ceiling
  double eps;
  if (value(a, 0.0) <= ceiling) {
    eps = 0.0;
  } else {
    double e_min;
    minimize_convex([&](double e) { return value(a, e); }, 0.0, eps_hi, &e_min);
    double lo = 0.0, hi = e_min;
    for (int i = 0; i < 70; ++i) {
      double mid = 0.5 * (lo + hi);
      if (value(a, mid) <= ceiling) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    eps = hi;
  }
  GrowthEstimate g;
  g.a = a;
  g.eps_bar = eps;
  double resid = value(a, eps);
  g.K0 = std::max(1.0, std::exp(resid));
  g.fit_residual = resid - std::log(g.K0);
  return g;
}

std::vector<std::pair<double, double>> make_sample_pairs(double horizon, int random_count,
                                                         unsigned seed, int lattice) {
  std::vector<std::pair<double, double>> pairs;
  // lattice over the (s, t) square, both orientations
  for (int i = 0; i <= lattice; ++i) {
    for (int j = 0; j <= lattice; ++j) {
      double u = horizon * i / lattice;
      double v = horizon * j / lattice;
      pairs.emplace_back(u, v);
    }
  }
  // dense edges: transitions from and to the origin bind most fits
  const int edge = 64;
  for (int i = 1; i <= edge; ++i) {
    double u = horizon * i / edge;
    pairs.emplace_back(u, 0.0);
    pairs.emplace_back(0.0, u);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, horizon);
  for (int i = 0; i < random_count; ++i) pairs.emplace_back(uni(rng), uni(rng));
  return pairs;
}

GrowthEstimate fit_growth_from_samples(const std::vector<std::array<double, 3>>& samples,
                                       double ceiling) {
  std::vector<EnvLine> lines;
  lines.reserve(samples.size());
  bool any_span = false;
  double a_hi = 1.0;
  for (const auto& [t, s, logphi] : samples) {
    double span = std::fabs(t - s);
    if (span > 1e-12) any_span = true;
    double w = std::min(t, s);
    lines.push_back({logphi, -span, -w});
    if (span > 0.1) a_hi = std::max(a_hi, logphi / span + 1.0);
  }
  if (!any_span) throw Error("flow", "degenerate samples: all pairs have t == s");

  const double eps_hi = 64.0;
  auto feasible = [&](double a) {
    return envelope_min_over_e(lines, a, 0.0, eps_hi) <= ceiling;
  };
  if (!feasible(a_hi)) {
    // should not happen: a_hi majorizes every positive-span sample
    a_hi *= 4.0;
    if (!feasible(a_hi)) throw Error("flow", "growth fit infeasible");
  }
  double a_lo = 0.0, a = a_hi;
  if (feasible(0.0)) {
    a = 0.0;
  } else {
    double lo = a_lo, hi = a_hi;
    for (int i = 0; i < 60; ++i) {
      double mid = 0.5 * (lo + hi);
      if (feasible(mid)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    a = hi;
  }
  double eps = envelope_min_feasible_e(lines, a, 0.0, eps_hi, ceiling);
  double resid = envelope_value(lines, a, eps);  // <= ceiling
  GrowthEstimate g;
  g.a = a;
  g.eps_bar = eps;
  g.K0 = std::max(1.0, std::exp(resid));
  g.fit_residual = resid - std::log(g.K0);  // <= 0
  return g;
}

GrowthEstimate fit_growth(const TransitionOperator& op,
                          const std::vector<std::pair<double, double>>& sample_pairs,
                          double ceiling) {
  if (sample_pairs.size() < 100) {
    throw Error("flow", "fit_growth needs at least 100 sample pairs");
  }
  std::vector<std::array<double, 3>> samples;
  samples.reserve(sample_pairs.size());
  for (const auto& [t, s] : sample_pairs) {
    double y = op.log_norm_transition(t, s);
    if (std::isfinite(y)) samples.push_back({t, s, y});
  }
  return fit_growth_from_samples(samples, ceiling);
}

}  // namespace ned
