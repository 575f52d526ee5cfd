#include "nedspec/contraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "nedspec/envelope.hpp"
#include "nedspec/flow.hpp"

namespace ned {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr unsigned kScheduleSeed = 1234;
}

ContractionParams ContractionParams::make(double delta, int m_intervals) {
  if (delta <= 0) throw Error("contraction", "delta must be positive");
  if (m_intervals < 1) throw Error("contraction", "need at least one spectral interval");
  ContractionParams p;
  p.delta = delta;
  p.m_intervals = m_intervals;
  p.M_delta = delta / m_intervals;
  p.K_delta = std::max(1.0, 1.0 / p.M_delta);
  return p;
}

ScalarDichotomyConstants scalar_dichotomy_constants(const std::function<double(double)>& d,
                                                    double horizon, double a_i, double b_i,
                                                    double M_delta) {
  if (!(a_i <= b_i) || M_delta <= 0) throw Error("contraction", "bad interval or M_delta");
  ScalarFlow q(d, horizon);
  const double u0 = a_i - M_delta;  // growing side, projector 0
  const double v0 = b_i + M_delta;  // decaying side, projector 1

  // both shifted channels must be hyperbolic in the claimed direction
  double q_end = q.cumulative(horizon);
  if (q_end - u0 * horizon <= 0) {
    throw Error("contraction", "shift " + std::to_string(u0) +
                                   " fails its dichotomy (spectrum interval misplaced low)");
  }
  if (q_end - v0 * horizon >= 0) {
    throw Error("contraction", "shift " + std::to_string(v0) +
                                   " fails its dichotomy (spectrum interval misplaced high)");
  }

  // coarse sizing, then ridge-exact pair oracle
  GrowthEstimate coarse;
  {
    auto pairs = make_sample_pairs(horizon, defaults::sample_pairs, kScheduleSeed);
    std::vector<std::array<double, 3>> samples;
    samples.reserve(pairs.size());
    for (auto [t, s] : pairs) samples.push_back({t, s, q.log_transition(t, s)});
    coarse = fit_growth_from_samples(samples);
  }
  double c_max = std::max(std::fabs(u0), std::fabs(v0)) + 3.0 * (coarse.a + coarse.eps_bar + 2.0);
  ScalarPairOracle oracle(q, c_max);
  GrowthEstimate g = fit_growth_scalar(oracle);

  // required ln(beta) over both shifted families at given (alpha - eps, eps)
  const double eps_hi = 32.0;
  auto value = [&](double gap, double eps) {
    double alpha = eps + gap;
    double stable = oracle.max_forward(-v0 + alpha, -v0 + alpha + eps);
    double unstable = oracle.max_backward(-u0 - alpha, -u0 - alpha + eps);
    return std::max(stable, unstable);
  };
  auto ln_beta_at = [&](double gap) {
    return minimize_convex([&](double e) { return value(gap, e); }, 0.0, eps_hi);
  };

  // L(gap) is convex increasing past its flat region; push the decay
  // margin up to the knee where the marginal beta cost explodes (the
  // asymptotic-slope wall), so constant channels report their true rate
  // while heavily nonuniform ones keep beta small enough for crossings
  const double m0 = defaults::alpha_eps_margin;
  const double knee_slope = 8.0;
  const double dg = 1e-4;
  auto slope_ok = [&](double gap) {
    return (ln_beta_at(gap + dg) - ln_beta_at(gap)) / dg <= knee_slope;
  };
  double gap_hi = (b_i - a_i) + 2 * M_delta + g.a + 4.0;
  double gap = m0;
  if (slope_ok(gap_hi)) {
    gap = gap_hi;
  } else if (slope_ok(m0)) {
    double lo = m0, hi = gap_hi;
    for (int i = 0; i < 50; ++i) {
      double mid = 0.5 * (lo + hi);
      if (slope_ok(mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    gap = lo;
  }
  double ln_beta = ln_beta_at(gap);
  // lexicographically smallest eps attaining it
  double eps;
  if (value(gap, 0.0) <= ln_beta + 1e-9) {
    eps = 0.0;
  } else {
    double e_min;
    minimize_convex([&](double e) { return value(gap, e); }, 0.0, eps_hi, &e_min);
    double lo = 0.0, hi = e_min;
    for (int i = 0; i < 70; ++i) {
      double mid = 0.5 * (lo + hi);
      if (value(gap, mid) <= ln_beta + 1e-9) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    eps = hi;
  }

  ScalarDichotomyConstants out;
  out.eps = eps;
  out.alpha = eps + gap;
  out.beta = std::max(1.0, std::exp(value(gap, eps)));
  out.a_bar = g.a;
  out.eps_bar = g.eps_bar;
  out.lnK = std::log(g.K0);
  if (!(out.alpha > out.eps)) {
    throw Error("contraction", "fitted alpha <= eps; no admissible scalar constants");
  }
  return out;
}

CrossingConstants select_constants(const ScalarDichotomyConstants& sdc, double a_i, double b_i,
                                   double M_delta) {
  if (!(sdc.alpha > sdc.eps)) {
    throw Error("contraction", "condition (C1) infeasible: alpha <= eps");
  }
  CrossingConstants c;
  double cap = std::min(sdc.alpha - sdc.eps, sdc.a_bar + std::fabs(a_i) + M_delta + sdc.eps_bar);
  if (cap <= 0) throw Error("contraction", "condition (C1) infeasible: empty slope range");
  c.N = 0.5 * cap;
  c.p = 1.0 + std::max(sdc.lnK, std::log(sdc.beta));
  c.p_bar = -c.p;
  c.xi_bar = -std::max(sdc.eps_bar, sdc.eps) - 0.1;
  c.xi = -c.xi_bar + 0.1;
  c.N_bar_floor =
      0.5 * std::max(-(sdc.alpha - sdc.eps), -(sdc.eps + (b_i - a_i) + 2 * M_delta));

  // re-verify the conditions before returning
  if (!(0 < c.N && c.N < cap)) throw Error("contraction", "condition (C1) violated");
  if (!(std::max(sdc.lnK, std::log(sdc.beta)) < c.p)) {
    throw Error("contraction", "condition (C2) violated");
  }
  if (!(0 <= std::max(sdc.eps_bar, sdc.eps) && std::max(sdc.eps_bar, sdc.eps) <= -c.xi_bar &&
        -c.xi_bar <= c.xi)) {
    throw Error("contraction", "condition (C3) violated");
  }
  if (!(c.N_bar_floor < 0)) throw Error("contraction", "condition (C4) floor not negative");
  return c;
}

double CrossingSchedule::c_value(double t) const {
  return segment(t) % 2 == 0 ? a_i : b_i;
}

double CrossingSchedule::lambda_value(double t) const {
  return segment(t) % 2 == 0 ? -M_delta : M_delta;
}

int CrossingSchedule::segment(double t) const {
  return static_cast<int>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
}

double CrossingSchedule::cumulative_target(double t) const {
  double acc = 0.0;
  double prev = 0.0;
  for (size_t l = 0; l < times.size(); ++l) {
    if (t <= times[l]) break;
    double value = (l % 2 == 0) ? a_i - M_delta : b_i + M_delta;
    acc += value * (times[l] - prev);
    prev = times[l];
  }
  int seg = segment(std::min(t, horizon));
  double value = (seg % 2 == 0) ? a_i - M_delta : b_i + M_delta;
  if (t > prev) acc += value * (t - prev);
  return acc;
}

namespace {

// first root of f at or after `from`, by fixed-step scan then bisection;
// f(from) must have sign `sign_at_start`
std::optional<double> first_crossing(const std::function<double(double)>& f, double from,
                                     double horizon, bool start_negative) {
  double step = defaults::crossing_scan_dt;
  double prev_t = from;
  double prev_f = f(from);
  if ((prev_f < 0) != start_negative && prev_f != 0) {
    throw Error("contraction", "crossing scan started on the wrong side at t = " +
                                   std::to_string(from));
  }
  for (double t = from + step; t <= horizon + step * 0.5; t += step) {
    t = std::min(t, horizon);
    double ft = f(t);
    bool crossed = start_negative ? (ft >= 0) : (ft <= 0);
    if (crossed) {
      double lo = prev_t, hi = t;
      while (hi - lo > defaults::root_tol) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        bool c = start_negative ? (fm >= 0) : (fm <= 0);
        if (c) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      return hi;
    }
    prev_t = t;
    prev_f = ft;
    if (t >= horizon) break;
  }
  return std::nullopt;
}

}  // namespace

CrossingSchedule build_crossing_schedule(const std::function<double(double)>& d,
                                         const ScalarDichotomyConstants& sdc,
                                         const CrossingConstants& constants, double a_i, double b_i,
                                         double M_delta, double horizon) {
  CrossingSchedule sched;
  sched.a_i = a_i;
  sched.b_i = b_i;
  sched.M_delta = M_delta;
  sched.horizon = horizon;
  sched.sdc = sdc;
  sched.constants = constants;

  ScalarFlow q(d, horizon);
  const double u0 = a_i - M_delta;
  const double v0 = b_i + M_delta;
  auto phi = [&q, u0](double t, double s) { return q.log_transition(t, s) - u0 * (t - s); };
  auto psi = [&q, v0](double t, double s) { return q.log_transition(t, s) - v0 * (t - s); };

  const double odd_gap_bound =
      (constants.p - sdc.lnK) / (sdc.a_bar + std::fabs(a_i) + M_delta + sdc.eps_bar - constants.N);

  double t_prev = 0.0;
  for (;;) {
    // odd crossing: Phi(t, T_prev) meets N (t - T_prev) + xi T_prev + p
    auto f_odd = [&](double t) {
      return phi(t, t_prev) - (constants.N * (t - t_prev) + constants.xi * t_prev + constants.p);
    };
    auto t_odd = first_crossing(f_odd, t_prev, horizon, /*start_negative=*/true);
    if (!t_odd) {
      sched.partial = true;
      break;
    }
    double gap1 = *t_odd - t_prev;
    if (gap1 < odd_gap_bound - 1e-6) {
      throw Error("contraction", "odd crossing gap " + std::to_string(gap1) +
                                     " under its lower bound " + std::to_string(odd_gap_bound));
    }
    sched.times.push_back(*t_odd);
    double level = constants.N * (*t_odd - t_prev) + constants.xi * t_prev + constants.p;

    // even crossing: Psi(t, T_odd) reaches -level
    auto f_even = [&](double t) { return psi(t, *t_odd) + level; };
    auto t_even = first_crossing(f_even, *t_odd, horizon, /*start_negative=*/false);
    if (!t_even) {
      sched.partial = true;
      break;
    }
    double gap2 = *t_even - *t_odd;
    double n_bar = (-level - (constants.xi_bar * *t_odd + constants.p_bar)) / gap2;
    // admissibility: the segment slope may not fall to the decay wall,
    // or the even-gap estimate loses its positive denominator
    double hard_floor = std::max(-(sdc.alpha - sdc.eps),
                                 -(sdc.eps + (b_i - a_i) + 2 * M_delta));
    if (!(n_bar > hard_floor)) {
      throw Error("contraction", "computed segment slope " + std::to_string(n_bar) +
                                     " violates its admissibility floor " +
                                     std::to_string(hard_floor));
    }
    double even_gap_bound =
        (constants.p - std::log(sdc.beta)) /
        (sdc.eps + (b_i - a_i) + 2 * M_delta + n_bar);
    if (even_gap_bound > 0 && gap2 < even_gap_bound - 1e-6) {
      throw Error("contraction", "even crossing gap " + std::to_string(gap2) +
                                     " under its lower bound " + std::to_string(even_gap_bound));
    }
    sched.times.push_back(*t_even);
    sched.n_bar.push_back(n_bar);
    t_prev = *t_even;
  }

  double n_bar_min = 0.0;
  for (double n : sched.n_bar) n_bar_min = std::min(n_bar_min, n);
  sched.upsilon = std::max(2 * (sdc.eps + constants.N + constants.xi),
                           2 * (sdc.eps - n_bar_min - constants.xi_bar));

  // verified integral envelope on a dense grid
  const int grid = 2048;
  double delta_bar = 0.0;
  for (int i = 0; i <= grid; ++i) {
    double t = horizon * i / grid;
    double integral = q.cumulative(t) - sched.cumulative_target(t);
    delta_bar = std::max(delta_bar, std::fabs(integral) - sched.upsilon * t);
  }
  sched.Delta_bar = delta_bar;
  return sched;
}

double SmoothedSchedule::c_value(double t) const {
  const auto& s = *source;
  for (size_t l = 0; l < s.times.size(); ++l) {
    double w = half_width[l];
    if (t < s.times[l] - w) break;
    if (t <= s.times[l] + w) {
      double lo = (l % 2 == 0) ? s.a_i : s.b_i;
      double hi = (l % 2 == 0) ? s.b_i : s.a_i;
      double u = (t - (s.times[l] - w)) / (2 * w);
      return lo + (hi - lo) * u;
    }
  }
  return s.c_value(t);
}

double SmoothedSchedule::lambda_value(double t) const {
  const auto& s = *source;
  for (size_t l = 0; l < s.times.size(); ++l) {
    double w = half_width[l];
    if (t < s.times[l] - w) break;
    if (t <= s.times[l] + w) {
      double lo = (l % 2 == 0) ? -s.M_delta : s.M_delta;
      double hi = -lo;
      double u = (t - (s.times[l] - w)) / (2 * w);
      return lo + (hi - lo) * u;
    }
  }
  return s.lambda_value(t);
}

double SmoothedSchedule::cumulative_target(double t) const {
  const auto& s = *source;
  double corr = 0.0;
  for (size_t l = 0; l < s.times.size(); ++l) {
    double w = half_width[l];
    double lo_t = s.times[l] - w;
    if (t <= lo_t) break;
    double height = ((l % 2 == 0) ? 1.0 : -1.0) * ((s.b_i - s.a_i) + 2 * s.M_delta);
    double u = t - lo_t;
    if (u >= 2 * w) continue;  // ramp fully passed: zero net correction
    if (u <= w) {
      corr += height * u * u / (4 * w);
    } else {
      corr += height * (w / 4 + (u * u - w * w) / (4 * w) - (u - w));
    }
  }
  return s.cumulative_target(t) + corr;
}

SmoothedSchedule smooth_schedule(const CrossingSchedule& schedule) {
  SmoothedSchedule out;
  out.source = &schedule;
  const size_t J = schedule.times.size();
  if (J == 0) return out;
  const double height = (schedule.b_i - schedule.a_i) + 2 * schedule.M_delta;
  out.half_width.resize(J);
  for (size_t l = 0; l < J; ++l) {
    double left_gap = schedule.times[l] - (l == 0 ? 0.0 : schedule.times[l - 1]);
    double right_gap =
        (l + 1 < J ? schedule.times[l + 1] : schedule.horizon) - schedule.times[l];
    double gap = std::min(left_gap, right_gap);
    double w = std::min(gap / 4, 1.0 / (4.0 * static_cast<double>(J) * height));
    if (w <= 0) throw Error("contraction", "smoothing ramps would overlap");
    out.half_width[l] = w;
    out.discrepancy_bound += height * w / 2;
  }
  if (out.discrepancy_bound > 1.0) {
    throw Error("contraction", "smoothing discrepancy bound exceeds 1");
  }
  return out;
}

ChannelScaling build_channel_scaling(const std::function<double(double)>& d,
                                     const CrossingSchedule& schedule,
                                     const SmoothedSchedule& smoothed) {
  auto q = std::make_shared<ScalarFlow>(d, schedule.horizon);
  auto smoothed_copy = std::make_shared<SmoothedSchedule>(smoothed);
  // keep the piecewise source alive inside the closure
  auto source_copy = std::make_shared<CrossingSchedule>(schedule);
  smoothed_copy->source = source_copy.get();

  ChannelScaling out;
  out.upsilon = schedule.upsilon;
  out.log_mu = [q, smoothed_copy, source_copy](double t) {
    return q->cumulative(t) - smoothed_copy->cumulative_target(t);
  };

  double needed = 0.0;
  const int grid = 1024;
  for (int i = 0; i <= grid; ++i) {
    double t = schedule.horizon * i / grid;
    needed = std::max(needed, std::fabs(out.log_mu(t)) - schedule.upsilon * t);
  }
  double budget = schedule.Delta_bar + 1.0;
  if (needed > budget + 1e-9) {
    throw Error("contraction", "scaling envelope violated: needs exp(" + std::to_string(needed) +
                                   ") against budget exp(" + std::to_string(budget) + ")");
  }
  out.Omega = std::exp(budget);
  return out;
}

namespace {

// |f(t)| <= C exp(kappa t) envelope of an off-diagonal entry: smallest
// kappa with residual budget, then C from the residual.
void fit_entry_envelope(const std::vector<std::pair<double, double>>& samples, double& C,
                        double& kappa) {
  std::vector<EnvLine> lines;
  for (auto [t, v] : samples) {
    if (std::fabs(v) > 1e-300) lines.push_back({std::log(std::fabs(v)), -t, 0.0});
  }
  if (lines.empty()) {
    C = 0.0;
    kappa = 0.0;
    return;
  }
  const double ceiling = defaults::growth_fit_ceiling;
  auto value_at = [&lines](double k) { return envelope_value(lines, k, 0.0); };
  if (value_at(0.0) <= ceiling) {
    kappa = 0.0;
  } else {
    double lo = 0.0, hi = 1.0;
    while (value_at(hi) > ceiling && hi < 1e3) hi *= 2;
    for (int i = 0; i < 60; ++i) {
      double mid = 0.5 * (lo + hi);
      if (value_at(mid) <= ceiling) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    kappa = hi;
  }
  C = std::exp(value_at(kappa));
}

}  // namespace

ContractionOutput contract_block(const TriangularSystem& D, double a_i, double b_i,
                                 const ContractionParams& params) {
  const int n = D.dim();
  const double horizon = D.horizon();
  const double M = params.M_delta;

  ContractionOutput out;
  out.dim = n;
  out.horizon = horizon;
  out.delta = params.delta;
  out.M_delta = M;
  out.K_delta = params.K_delta;
  out.enclosure.push_back({a_i, b_i});

  // Steps 2-3 per channel
  for (int r = 0; r < n; ++r) {
    ChannelResult ch;
    auto d = D.diagonal(r);
    ScalarDichotomyConstants sdc = scalar_dichotomy_constants(d, horizon, a_i, b_i, M);
    CrossingConstants constants = select_constants(sdc, a_i, b_i, M);
    ch.schedule = build_crossing_schedule(d, sdc, constants, a_i, b_i, M, horizon);
    ch.smoothed = smooth_schedule(ch.schedule);
    ch.scaling = build_channel_scaling(d, ch.schedule, ch.smoothed);
    out.channels.push_back(std::move(ch));
    out.channel_block.push_back(0);
    out.crossing_times.push_back(out.channels.back().schedule.times);
    out.upsilon = std::max(out.upsilon, out.channels.back().schedule.upsilon);
    if (!out.channels.back().schedule.times.empty()) {
      out.last_crossing = std::max(out.last_crossing, out.channels.back().schedule.times.back());
    }
  }

  // off-diagonal envelope of D
  double K1 = 0.0, kappa1 = 0.0;
  if (n > 1) {
    std::vector<std::pair<double, double>> samples;
    const int grid = 512;
    for (int i = 0; i <= grid; ++i) {
      double t = horizon * i / grid;
      Matrix u = D.eval(t);
      double worst = 0.0;
      for (int r = 0; r < n; ++r)
        for (int c = r + 1; c < n; ++c) worst = std::max(worst, std::fabs(u(r, c)));
      samples.emplace_back(t, worst);
    }
    fit_entry_envelope(samples, K1, kappa1);
  }
  out.K1 = K1;
  out.kappa1 = kappa1;

  // scaling-ratio envelope
  out.kappa2 = 2 * out.upsilon;
  double K2 = 1.0;
  if (n > 1) {
    const int grid = 512;
    for (int i = 0; i <= grid; ++i) {
      double t = horizon * i / grid;
      for (int r = 0; r < n; ++r) {
        for (int s = 0; s < n; ++s) {
          if (r == s) continue;
          double ratio = out.channels[s].scaling.log_mu(t) - out.channels[r].scaling.log_mu(t);
          K2 = std::max(K2, std::exp(ratio - out.kappa2 * t));
        }
      }
    }
  }
  out.K2 = K2;
  out.kappa = out.kappa1 + out.kappa2;
  out.eta = 0.5 * M / (M + out.K1 * out.K2);
  out.K_delta_eps = 2.0 + n * out.kappa * params.K_delta;

  // assembled diagonal, perturbation and transform pieces
  struct Shared {
    std::vector<SmoothedSchedule> smoothed;
    std::vector<std::shared_ptr<CrossingSchedule>> sources;
    std::vector<std::function<double(double)>> log_mu;
    std::function<Matrix(double)> U;
    double rate = 0.0;  // kappa * M_delta * K_delta
    double eta = 0.0;
    int n = 0;
  };
  auto sh = std::make_shared<Shared>();
  sh->n = n;
  sh->rate = out.kappa * M * params.K_delta;
  sh->eta = out.eta;
  {
    auto u_copy = D;  // TriangularSystem is a cheap handle (shared functions)
    sh->U = [u_copy](double t) { return u_copy.eval(t); };
  }
  for (int r = 0; r < n; ++r) {
    auto src = std::make_shared<CrossingSchedule>(out.channels[r].schedule);
    SmoothedSchedule sm = out.channels[r].smoothed;
    sm.source = src.get();
    sh->sources.push_back(src);
    sh->smoothed.push_back(sm);
    sh->log_mu.push_back(out.channels[r].scaling.log_mu);
  }

  out.C = [sh](double t) {
    Vector c(sh->n);
    for (int r = 0; r < sh->n; ++r) c(r) = sh->smoothed[r].c_value(t);
    return c;
  };
  out.B = [sh](double t) {
    Matrix b = Matrix::Zero(sh->n, sh->n);
    Matrix u = sh->U(t);
    for (int r = 0; r < sh->n; ++r) {
      b(r, r) = sh->smoothed[r].lambda_value(t) + (r + 1) * sh->rate;
      for (int s = r + 1; s < sh->n; ++s) {
        double scale = (s - r) * std::log(sh->eta) + (sh->log_mu[s](t) - sh->log_mu[r](t)) -
                       (s - r) * sh->rate * t;
        b(r, s) = std::exp(scale) * u(r, s);
      }
    }
    return b;
  };
  out.log_diag = [sh](double t) {
    Vector g(sh->n);
    for (int r = 0; r < sh->n; ++r) {
      g(r) = sh->log_mu[r](t) + r * std::log(sh->eta) - (r + 1) * sh->rate * t;
    }
    return g;
  };
  out.conjugated = [sh](double t) {
    Matrix u = sh->U(t);
    Matrix g = Matrix::Zero(sh->n, sh->n);
    for (int r = 0; r < sh->n; ++r) {
      // diagonal: d_rr - dln(mu)/dt + (r+1) rate = cbar + lambdabar + (r+1) rate
      double dln = (u(r, r) - sh->smoothed[r].c_value(t) - sh->smoothed[r].lambda_value(t)) -
                   (r + 1) * sh->rate;
      g(r, r) = u(r, r) - dln;
      for (int s = r + 1; s < sh->n; ++s) {
        double scale = (s - r) * std::log(sh->eta) + (sh->log_mu[s](t) - sh->log_mu[r](t)) -
                       (s - r) * sh->rate * t;
        g(r, s) = std::exp(scale) * u(r, s);
      }
    }
    return g;
  };
  auto log_diag = out.log_diag;
  auto s_fn = [log_diag](double t) -> Matrix {
    return Vector(log_diag(t).array().exp()).asDiagonal();
  };
  auto s_dot_fn = [sh, log_diag](double t) -> Matrix {
    // d/dt exp(g) = g' exp(g); g' = (d_rr - cbar - lambdabar) - (r+1) rate
    Vector g = log_diag(t);
    Matrix u = sh->U(t);
    Vector gdot(sh->n);
    for (int r = 0; r < sh->n; ++r) {
      gdot(r) = (u(r, r) - sh->smoothed[r].c_value(t) - sh->smoothed[r].lambda_value(t)) -
                (r + 1) * sh->rate;
    }
    return Vector(gdot.array() * g.array().exp()).asDiagonal();
  };
  double omega = 1.0;
  for (const auto& ch : out.channels) omega = std::max(omega, ch.scaling.Omega);
  double m_upsilon = omega * std::pow(out.eta, -(n - 1));
  double upsilon_total = out.upsilon + n * sh->rate;
  out.transform = KinematicTransform(s_fn, s_dot_fn, n, horizon, m_upsilon, upsilon_total);
  out.original = sh->U;
  out.upsilon = upsilon_total;
  out.certified_until = horizon;

  // final bound check on the grid
  const double bound = (params.delta / params.m_intervals) * out.K_delta_eps;
  const int grid = 1024;
  for (int i = 0; i <= grid; ++i) {
    double t = horizon * i / grid;
    double norm = spectral_norm(out.B(t));
    if (norm > bound * (1 + 1e-9)) {
      throw Error("contraction", "perturbation bound violated at t = " + std::to_string(t) +
                                     ": " + std::to_string(norm) + " > " + std::to_string(bound));
    }
  }
  return out;
}

ContractionOutput contract_system(const GeneralSystem& system, double delta, SweepPlan plan) {
  DichotomyTester tester(system, plan.sampling);
  SpectrumResult spectrum = compute_spectrum(tester, plan);
  const int m = static_cast<int>(spectrum.intervals.size());
  ContractionParams params = ContractionParams::make(delta, m);

  auto blocks = system.blocks.empty() ? detect_blocks_numeric(system) : system.blocks;

  struct BlockPiece {
    int begin, n;
    ContractionOutput out;
    KinematicTransform tri;
    std::function<Matrix(double)> orth;
  };
  auto pieces = std::make_shared<std::vector<BlockPiece>>();

  for (auto [begin, end] : blocks) {
    GeneralSystem sub = extract_block(system, begin, end);
    auto [tri_transform, tri_system] = triangularize(sub);
    SpectrumResult block_spec = compute_spectrum(sub, plan);
    if (block_spec.intervals.size() != 1) {
      throw Error("contraction",
                  "input block [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") spans " + std::to_string(block_spec.intervals.size()) +
                      " spectral intervals; per-interval splitting of coupled blocks is not "
                      "supported");
    }
    // host interval of the full spectrum
    const SpectralInterval* host = nullptr;
    for (const auto& iv : spectrum.intervals) {
      if (block_spec.intervals[0].lo >= iv.lo - spectrum.tolerance &&
          block_spec.intervals[0].hi <= iv.hi + spectrum.tolerance) {
        host = &iv;
        break;
      }
    }
    if (!host) throw Error("contraction", "block spectrum not contained in any interval");

    BlockPiece piece;
    piece.begin = begin;
    piece.n = end - begin;
    piece.out = contract_block(tri_system, host->lo, host->hi, params);
    piece.tri = tri_transform;
    auto s = tri_transform;
    piece.orth = [s](double t) { return s.S(t); };
    pieces->push_back(std::move(piece));
  }

  ContractionOutput out;
  out.dim = system.n;
  out.horizon = system.horizon;
  out.delta = delta;
  out.M_delta = params.M_delta;
  out.K_delta = params.K_delta;
  out.certified_until = system.horizon;

  double eta = 1.0;
  for (const auto& piece : *pieces) {
    out.kappa = std::max(out.kappa, piece.out.kappa);
    out.K1 = std::max(out.K1, piece.out.K1);
    out.K2 = std::max(out.K2, piece.out.K2);
    out.kappa1 = std::max(out.kappa1, piece.out.kappa1);
    out.kappa2 = std::max(out.kappa2, piece.out.kappa2);
    out.K_delta_eps = std::max(out.K_delta_eps, piece.out.K_delta_eps);
    out.upsilon = std::max(out.upsilon, piece.out.upsilon);
    out.last_crossing = std::max(out.last_crossing, piece.out.last_crossing);
    eta = std::min(eta, piece.out.eta);
    out.enclosure.insert(out.enclosure.end(), piece.out.enclosure.begin(),
                         piece.out.enclosure.end());
    out.crossing_times.insert(out.crossing_times.end(), piece.out.crossing_times.begin(),
                              piece.out.crossing_times.end());
    for (const auto& ch : piece.out.channels) {
      out.channels.push_back(ch);
      out.channel_block.push_back(static_cast<int>(out.enclosure.size()) - 1);
    }
  }
  out.eta = eta;

  const int dim = system.n;
  out.C = [pieces, dim](double t) {
    Vector c(dim);
    for (const auto& piece : *pieces) c.segment(piece.begin, piece.n) = piece.out.C(t);
    return c;
  };
  out.B = [pieces, dim](double t) {
    Matrix b = Matrix::Zero(dim, dim);
    for (const auto& piece : *pieces) b.block(piece.begin, piece.begin, piece.n, piece.n) = piece.out.B(t);
    return b;
  };
  auto s_fn = [pieces, dim](double t) {
    Matrix s = Matrix::Zero(dim, dim);
    for (const auto& piece : *pieces) {
      s.block(piece.begin, piece.begin, piece.n, piece.n) =
          piece.orth(t) * piece.out.transform.S(t);
    }
    return s;
  };
  auto s_dot_fn = [pieces, dim](double t) {
    Matrix s = Matrix::Zero(dim, dim);
    for (const auto& piece : *pieces) {
      s.block(piece.begin, piece.begin, piece.n, piece.n) =
          piece.tri.S_dot(t) * piece.out.transform.S(t) +
          piece.orth(t) * piece.out.transform.S_dot(t);
    }
    return s;
  };
  double m_upsilon = 1.0, upsilon = 0.0;
  for (const auto& piece : *pieces) {
    m_upsilon = std::max(m_upsilon, piece.tri.M_upsilon() * piece.out.transform.M_upsilon());
    upsilon = std::max(upsilon, piece.tri.upsilon() + piece.out.transform.upsilon());
  }
  out.transform = KinematicTransform(s_fn, s_dot_fn, dim, system.horizon, m_upsilon, upsilon);
  out.upsilon = upsilon;
  out.original = system.A;
  out.log_diag = [pieces, dim](double t) {
    Vector g(dim);
    for (const auto& piece : *pieces) g.segment(piece.begin, piece.n) = piece.out.log_diag(t);
    return g;
  };
  out.conjugated = [pieces, dim](double t) {
    Matrix g = Matrix::Zero(dim, dim);
    for (const auto& piece : *pieces) {
      g.block(piece.begin, piece.begin, piece.n, piece.n) = piece.out.conjugated(t);
    }
    return g;
  };

  // end-to-end similarity residual: assembled diagonal-plus-small form
  // against the log-safe conjugation of the original coefficients
  {
    const int grid = 512;
    double worst = 0.0;
    for (int i = 0; i <= grid; ++i) {
      double t = system.horizon * i / grid;
      Matrix target = Matrix(out.C(t).asDiagonal()) + out.B(t);
      worst = std::max(worst, spectral_norm(target - out.conjugated(t)));
    }
    out.similarity_residual = worst;
    if (worst > 1e-6) {
      throw Error("contraction",
                  "end-to-end similarity residual " + std::to_string(worst) + " above 1e-6");
    }
  }
  return out;
}

ContractionOutput contract_system(const LinearSystem& system, double delta, SweepPlan plan) {
  return contract_system(as_general(system), delta, plan);
}

bool CertificateReport::all_pass() const {
  for (const auto& c : clauses)
    if (!c.pass) return false;
  return true;
}

CertificateReport certify(const ContractionOutput& output, double delta,
                          const SpectrumResult& spectrum, int grid_points) {
  CertificateReport report;
  const double horizon = output.certified_until;

  // fresh grid, offset from the pipeline's own grids
  std::vector<double> ts;
  ts.reserve(grid_points);
  for (int i = 0; i < grid_points; ++i) ts.push_back(horizon * (i + 0.37) / grid_points);

  {  // (i) diagonal values inside the spectrum enclosure
    CertificateClause c{"diagonal_in_spectrum", true, 0.0, kInf};
    for (double t : ts) {
      Vector cv = output.C(t);
      for (int r = 0; r < cv.size(); ++r) {
        double dist = kInf;
        for (const auto& iv : spectrum.intervals) {
          dist = std::min(dist, std::max({0.0, iv.lo - cv(r), cv(r) - iv.hi}));
        }
        double margin = spectrum.tolerance - dist;
        if (margin < c.margin) {
          c.margin = margin;
          c.worst_t = t;
        }
      }
    }
    c.pass = c.margin >= 0;
    report.clauses.push_back(c);
  }

  {  // (ii) perturbation smallness
    CertificateClause c{"perturbation_bound", true, 0.0, kInf};
    const double bound = delta * output.K_delta_eps;
    for (double t : ts) {
      double margin = bound - spectral_norm(output.B(t));
      if (margin < c.margin) {
        c.margin = margin;
        c.worst_t = t;
      }
    }
    c.pass = c.margin >= 0;
    report.clauses.push_back(c);
  }

  {  // (iii) transform growth bounds, checked in the log domain (the
     // orthogonal part has unit norm; the diagonal scalings carry all growth)
    CertificateClause c{"transform_bounds", true, 0.0, kInf};
    const double ln_budget0 = std::log(output.transform.M_upsilon());
    for (double t : ts) {
      Vector g = output.log_diag(t);
      double ln_budget = ln_budget0 + output.transform.upsilon() * t;
      double margin = ln_budget - g.cwiseAbs().maxCoeff();
      if (margin < c.margin) {
        c.margin = margin;
        c.worst_t = t;
      }
    }
    c.pass = c.margin >= 0;
    report.clauses.push_back(c);
  }

  {  // (iv) similarity residual of the assembled form
    CertificateClause c{"similarity_residual", true, 0.0, kInf};
    double worst = 0.0;
    for (size_t i = 0; i < ts.size(); i += 16) {
      double t = ts[i];
      Matrix target = Matrix(output.C(t).asDiagonal()) + output.B(t);
      double r = spectral_norm(target - output.conjugated(t));
      if (r > worst) {
        worst = r;
        c.worst_t = t;
      }
    }
    c.margin = 1e-6 - worst;
    c.pass = c.margin >= 0;
    report.clauses.push_back(c);
  }

  return report;
}

}  // namespace ned
