#pragma once

#include <functional>
#include <vector>

namespace ned {

/// Minimum of a convex piecewise-linear function on [lo, hi] by
/// derivative-sign bisection.
double minimize_convex(const std::function<double(double)>& f, double lo, double hi,
                       double* x_star = nullptr);

/// One log-domain envelope constraint:  lnC >= y + ca*x + ce*e,
/// where x and e are the two fitted rate variables and lnC is the
/// fitted constant. All envelope fits in the toolkit reduce to
/// minimax problems over families of these lines.
struct EnvLine {
  double y;
  double ca;
  double ce;
};

/// F(x, e) = max_i (y_i + ca_i x + ce_i e): the smallest admissible lnC.
double envelope_value(const std::vector<EnvLine>& lines, double x, double e);

/// min over e in [elo, ehi] of F(x, e). F is convex piecewise-linear in e;
/// the minimizer is located by subgradient-sign bisection. If e_star is
/// non-null it receives the minimizing e.
double envelope_min_over_e(const std::vector<EnvLine>& lines, double x, double elo, double ehi,
                           double* e_star = nullptr);

/// Smallest e in [elo, ehi] with F(x, e) <= ceiling, assuming some e in the
/// interval is feasible (call envelope_min_over_e first). Returns elo when
/// already feasible there.
double envelope_min_feasible_e(const std::vector<EnvLine>& lines, double x, double elo, double ehi,
                               double ceiling);

/// Largest e in [elo, ehi] with F(x, e) <= ceiling (right end of the
/// feasible interval).
double envelope_max_feasible_e(const std::vector<EnvLine>& lines, double x, double elo, double ehi,
                               double ceiling);

}  // namespace ned
