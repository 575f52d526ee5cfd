#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <vector>

#include "nedspec/system.hpp"

namespace ned {

/// Matrix with a separated logarithmic scale: value = exp(log_scale) * m,
/// kept with ||m|| near 1 so products over long horizons never overflow.
struct ScaledMatrix {
  Matrix m;
  double log_scale = 0.0;

  double log_norm() const;
  Matrix dense() const;  // throws on overflow
};

struct IntegratorStats {
  long steps = 0;
  long rejected = 0;
};

/// Adaptive Dormand-Prince 5(4) step sequence for Y' = f(t, Y) from t0 to
/// t1 (either direction). Tolerances are applied per step, elementwise
/// scaled. Throws on step underflow.
Matrix integrate_ode(const std::function<Matrix(double, const Matrix&)>& f, Matrix y0, double t0,
                     double t1, double abs_tol, double rel_tol, IntegratorStats* stats = nullptr);

/// Adaptive quadrature of a scalar function (same integrator, 1x1 state).
double integrate_scalar(const std::function<double(double)>& f, double t0, double t1,
                        double abs_tol = 1e-12, double rel_tol = 1e-12);

/// Evolution operator of x' = A(t)x with a dense checkpoint grid.
///
/// Checkpoints store the per-step transitions M_k = Phi(t_{k+1}, t_k) and
/// their inverses; arbitrary transitions are composed from them with
/// running log rescaling, re-integrating the partial ends. The plain
/// Phi(t,0) Phi(s,0)^-1 reconstruction is used when the stored inverse
/// residual stays below tolerance, otherwise composition falls back to
/// direct re-integration from s.
class TransitionOperator {
public:
  explicit TransitionOperator(GeneralSystem system,
                              double abs_tol = defaults::integ_abs_tol,
                              double rel_tol = defaults::integ_rel_tol,
                              double checkpoint_dt = defaults::checkpoint_dt);
  explicit TransitionOperator(const LinearSystem& system,
                              double abs_tol = defaults::integ_abs_tol,
                              double rel_tol = defaults::integ_rel_tol,
                              double checkpoint_dt = defaults::checkpoint_dt)
      : TransitionOperator(as_general(system), abs_tol, rel_tol, checkpoint_dt) {}

  const GeneralSystem& system() const { return system_; }
  int dim() const { return system_.n; }
  double horizon() const { return system_.horizon; }

  /// Phi(t,s) as a dense matrix. Throws when the value overflows doubles.
  Matrix transition(double t, double s) const;

  /// Phi(t,s) in scaled form; never overflows.
  ScaledMatrix transition_scaled(double t, double s) const;

  /// ln ||Phi(t,s)||.
  double log_norm_transition(double t, double s) const;

  /// Scaled product Phi(t,s) * B for a tall matrix B (basis propagation).
  ScaledMatrix apply_scaled(double t, double s, const Matrix& b) const;

  IntegratorStats stats() const { return {steps_.load(), rejected_.load()}; }
  int checkpoint_count() const { return static_cast<int>(grid_.size()); }
  double checkpoint_time(int k) const { return grid_[k]; }

  /// Diagnostic rows (t, ln||Phi(t,0)||, cond(Phi(t,0))) for the CSV dump.
  std::vector<std::array<double, 3>> checkpoint_diagnostics() const;

  /// Max relative cocycle defect over the supplied triples.
  double cocycle_defect(const std::vector<std::array<double, 3>>& triples) const;

private:
  ScaledMatrix compose(double t, double s) const;
  Matrix integrate_span(const Matrix& y0, double t0, double t1) const;

  GeneralSystem system_;
  double abs_tol_, rel_tol_;
  std::vector<double> grid_;
  std::vector<Matrix> step_;      // step_[k] = Phi(grid_[k+1], grid_[k])
  std::vector<Matrix> step_inv_;  // inverse of step_[k], residual-checked
  std::vector<double> step_inv_residual_;
  mutable std::atomic<long> steps_{0};
  mutable std::atomic<long> rejected_{0};
};

/// Cumulative integral Q(t) = int_0^t a(tau) dtau of a scalar system,
/// checkpointed like the transition operator. ln Phi(t,s) = Q(t) - Q(s).
class ScalarFlow {
public:
  explicit ScalarFlow(const LinearSystem& system, double tol = 1e-12);
  explicit ScalarFlow(const GeneralSystem& system, double tol = 1e-12);
  ScalarFlow(std::function<double(double)> rhs, double horizon, double tol = 1e-12);

  double cumulative(double t) const;                           // Q(t)
  double log_transition(double t, double s) const;             // Q(t) - Q(s)
  double rhs(double t) const { return rhs_(t); }
  double horizon() const { return horizon_; }

private:
  std::function<double(double)> rhs_;
  double horizon_;
  double tol_;
  double dt_;
  std::vector<double> q_;  // Q at k*dt_
};

/// Exact pair maxima for one scalar flow: every envelope fit in the
/// toolkit needs sup over pairs of [Q(t) + u t] - [Q(s) + v s] for various
/// tilts (u, v). Random pairs miss the binding peak/trough ridges when the
/// coefficient oscillates with growing amplitude, so the candidate times
/// are the roots of a(tau) = c over a tilt grid: the stationary points of
/// every tilted cumulative the fits can ask about.
class ScalarPairOracle {
public:
  ScalarPairOracle(const ScalarFlow& flow, double c_max, int c_steps = 201,
                   double scan_dt = 0.02);

  /// sup over t >= s of [Q(t) + u t] - [Q(s) + v s]; never below 0 (t = s).
  double max_forward(double u, double v) const;
  /// sup over t <= s of the same expression.
  double max_backward(double u, double v) const;

  const std::vector<double>& times() const { return t_; }
  double tilt_limit() const { return c_max_; }

private:
  std::vector<double> t_, q_;
  double c_max_;
};


/// int_s^t A(tau) dtau for one-dimensional systems, by adaptive quadrature.
double scalar_log_transition(const LinearSystem& system, double t, double s);

/// Fitted constants of a two-sided growth envelope
///   ln||Phi(t,s)|| <= ln K0 + a|t-s| + eps_bar * min(t,s).
struct GrowthEstimate {
  double K0 = 1.0;       // >= 1
  double a = 0.0;        // >= 0
  double eps_bar = 0.0;  // >= 0
  double fit_residual = 0.0;  // max slack, <= 0 by construction
};

/// Sample pairs for envelope fitting: a deterministic lattice, both time
/// orientations, the t=0 / s=0 edges, plus `random_count` seeded pairs.
std::vector<std::pair<double, double>> make_sample_pairs(double horizon, int random_count,
                                                         unsigned seed, int lattice = defaults::lattice_side);

/// Lexicographic envelope fit: smallest a (then smallest eps_bar) such that
/// the envelope with ln K0 <= ceiling majorizes every sample; K0 is the max
/// residual at the chosen rates. Throws if all pairs are degenerate (t == s).
GrowthEstimate fit_growth(const TransitionOperator& op,
                          const std::vector<std::pair<double, double>>& sample_pairs,
                          double ceiling = defaults::growth_fit_ceiling);

/// Same fit from precomputed (t, s, ln||Phi(t,s)||) triples.
GrowthEstimate fit_growth_from_samples(const std::vector<std::array<double, 3>>& samples,
                                       double ceiling = defaults::growth_fit_ceiling);
/// Lexicographic scalar growth fit through the pair oracle: smallest a,
/// then smallest eps_bar, such that Q(t) - Q(s) <= ln K0 + a|t-s| +
/// eps_bar min(t,s) with ln K0 <= ceiling; K0 from the worst residual.
GrowthEstimate fit_growth_scalar(const ScalarPairOracle& oracle,
                                 double ceiling = defaults::growth_fit_ceiling);


}  // namespace ned
