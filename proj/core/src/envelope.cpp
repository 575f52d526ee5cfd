#include "nedspec/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ned {

double minimize_convex(const std::function<double(double)>& f, double lo, double hi,
                       double* x_star) {
  const double h = 1e-7 * (1 + std::fabs(hi - lo));
  auto slope_positive = [&](double x) { return f(x + h) - f(x - h) > 0; };
  if (slope_positive(lo + h)) {
    if (x_star) *x_star = lo;
    return f(lo);
  }
  if (!slope_positive(hi - h)) {
    if (x_star) *x_star = hi;
    return f(hi);
  }
  double a = lo, b = hi;
  for (int i = 0; i < 70; ++i) {
    double mid = 0.5 * (a + b);
    if (slope_positive(mid)) {
      b = mid;
    } else {
      a = mid;
    }
  }
  double x = 0.5 * (a + b);
  if (x_star) *x_star = x;
  return std::min({f(a), f(b), f(x)});
}

double envelope_value(const std::vector<EnvLine>& lines, double x, double e) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& l : lines) best = std::max(best, l.y + l.ca * x + l.ce * e);
  return best;
}

namespace {

// Right derivative of e -> F(x, e): max slope among active lines.
double right_slope(const std::vector<EnvLine>& lines, double x, double e) {
  double f = envelope_value(lines, x, e);
  double slope = -std::numeric_limits<double>::infinity();
  for (const auto& l : lines) {
    if (l.y + l.ca * x + l.ce * e >= f - 1e-12 * (1 + std::fabs(f))) {
      slope = std::max(slope, l.ce);
    }
  }
  return slope;
}

}  // namespace

double envelope_min_over_e(const std::vector<EnvLine>& lines, double x, double elo, double ehi,
                           double* e_star) {
  double lo = elo, hi = ehi;
  if (right_slope(lines, x, lo) >= 0) {
    if (e_star) *e_star = lo;
    return envelope_value(lines, x, lo);
  }
  if (right_slope(lines, x, hi) <= 0) {
    if (e_star) *e_star = hi;
    return envelope_value(lines, x, hi);
  }
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    if (right_slope(lines, x, mid) < 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double e = 0.5 * (lo + hi);
  if (e_star) *e_star = e;
  return std::min(envelope_value(lines, x, lo), envelope_value(lines, x, hi));
}

double envelope_min_feasible_e(const std::vector<EnvLine>& lines, double x, double elo, double ehi,
                               double ceiling) {
  if (envelope_value(lines, x, elo) <= ceiling) return elo;
  double e_min;
  envelope_min_over_e(lines, x, elo, ehi, &e_min);
  double lo = elo, hi = e_min;
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    if (envelope_value(lines, x, mid) <= ceiling) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double envelope_max_feasible_e(const std::vector<EnvLine>& lines, double x, double elo, double ehi,
                               double ceiling) {
  if (envelope_value(lines, x, ehi) <= ceiling) return ehi;
  double e_min;
  envelope_min_over_e(lines, x, elo, ehi, &e_min);
  double lo = e_min, hi = ehi;
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    if (envelope_value(lines, x, mid) <= ceiling) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace ned
