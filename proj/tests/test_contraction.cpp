#include <doctest.h>

#include <cmath>

#include "nedspec/contraction.hpp"
#include "nedspec/flow.hpp"

using namespace ned;

namespace {

TriangularSystem scalar_channel(std::function<double(double)> d, double horizon, double bound_M,
                                double bound_mu = 0.0) {
  auto fn = [d](double t) {
    Matrix m(1, 1);
    m(0, 0) = d(t);
    return m;
  };
  return TriangularSystem(fn, 1, horizon, {bound_M, bound_mu});
}

}  // namespace

TEST_CASE("params derive M_delta and K_delta") {
  auto p = ContractionParams::make(0.5, 1);
  CHECK(p.M_delta == doctest::Approx(0.5));
  CHECK(p.K_delta == doctest::Approx(2.0));
  auto q = ContractionParams::make(0.5, 2);
  CHECK(q.M_delta == doctest::Approx(0.25));
  CHECK(q.K_delta == doctest::Approx(4.0));
  CHECK(q.K_delta * q.M_delta >= 1.0);
  CHECK_THROWS_AS(ContractionParams::make(-1.0, 1), Error);
}

TEST_CASE("scalar constants: zero channel") {
  auto sdc = scalar_dichotomy_constants([](double) { return 0.0; }, 200.0, 0.0, 0.0, 0.5);
  CHECK(sdc.alpha == doctest::Approx(0.5).epsilon(0.05));
  CHECK(sdc.eps <= 0.02);
  CHECK(sdc.beta <= 1.1);
  CHECK(sdc.alpha > sdc.eps);
}

TEST_CASE("scalar constants: sine channel") {
  auto sdc = scalar_dichotomy_constants([](double t) { return std::sin(t); }, 200.0, 0.0, 0.0, 0.5);
  CHECK(sdc.alpha == doctest::Approx(0.5).epsilon(0.1));
  CHECK(sdc.eps <= 0.05);
  CHECK(sdc.beta <= std::exp(2.0) * 1.2);
  CHECK(sdc.alpha > sdc.eps);
}

TEST_CASE("scalar constants: first example channel admits both sides") {
  auto sdc = scalar_dichotomy_constants([](double t) { return -2 - t * std::sin(t); }, 200.0, -3.0,
                                        -1.0, 0.25);
  CHECK(sdc.alpha > sdc.eps);
  CHECK(sdc.eps > 0.0);
  CHECK(sdc.beta >= 1.0);
}

TEST_CASE("scalar constants reject a misplaced interval") {
  // claimed interval far above the channel's actual spectrum
  CHECK_THROWS_AS(
      scalar_dichotomy_constants([](double) { return -2.0; }, 200.0, 3.0, 4.0, 0.5), Error);
}

TEST_CASE("constant selection policy") {
  ScalarDichotomyConstants sdc;
  sdc.beta = 1.0;
  sdc.alpha = 1.0;
  sdc.eps = 0.0;
  sdc.a_bar = 1.0;
  sdc.eps_bar = 0.0;
  sdc.lnK = 0.0;
  CrossingConstants c = select_constants(sdc, 0.0, 0.0, 0.5);
  CHECK(c.N == doctest::Approx(0.5));
  CHECK(c.p == doctest::Approx(1.0));
  CHECK(c.xi == doctest::Approx(0.2));
  CHECK(c.xi_bar == doctest::Approx(-0.1));
  CHECK(c.p_bar == doctest::Approx(-1.0));

  ScalarDichotomyConstants bad = sdc;
  bad.eps = bad.alpha;  // (C1) infeasible
  CHECK_THROWS_AS(select_constants(bad, 0.0, 0.0, 0.5), Error);
}

TEST_CASE("crossing schedule of the zero channel") {
  // Phi(t,0) = 0.5 t meets 0.25 t + 1 at t = 4; the next crossing halves
  // back at t = 8 under the mirrored level
  ScalarDichotomyConstants sdc;
  sdc.beta = 1.0;
  sdc.alpha = 0.5;
  sdc.eps = 0.0;
  sdc.a_bar = 0.0;
  sdc.eps_bar = 0.0;
  sdc.lnK = 0.0;
  CrossingConstants c;
  c.N = 0.25;
  c.xi = 0.2;
  c.p = 1.0;
  c.xi_bar = -0.1;
  c.p_bar = -1.0;
  c.N_bar_floor = -0.25;
  CrossingSchedule sched =
      build_crossing_schedule([](double) { return 0.0; }, sdc, c, 0.0, 0.0, 0.5, 40.0);
  REQUIRE(sched.times.size() >= 2);
  CHECK(sched.times[0] == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(sched.times[1] == doctest::Approx(8.0).epsilon(1e-6));
  // piecewise values alternate
  CHECK(sched.lambda_value(2.0) == doctest::Approx(-0.5));
  CHECK(sched.lambda_value(5.0) == doctest::Approx(0.5));
  CHECK(sched.c_value(2.0) == doctest::Approx(0.0));
  // the verified integral envelope holds with its reported constants
  ScalarFlow q([](double) { return 0.0; }, 40.0);
  for (int i = 0; i <= 400; ++i) {
    double t = 40.0 * i / 400;
    double integral = q.cumulative(t) - sched.cumulative_target(t);
    CHECK(std::fabs(integral) <= sched.Delta_bar + sched.upsilon * t + 1e-9);
  }
}

TEST_CASE("crossing schedule of the sine channel solves the stated root") {
  ScalarDichotomyConstants sdc;
  sdc.beta = std::exp(2.0);
  sdc.alpha = 0.5;
  sdc.eps = 0.0;
  sdc.a_bar = 0.0;
  sdc.eps_bar = 0.0;
  sdc.lnK = 2.0;
  CrossingConstants c = select_constants(sdc, 0.0, 0.0, 0.5);
  CHECK(c.p == doctest::Approx(3.0));  // 1 + ln(beta)
  CrossingSchedule sched = build_crossing_schedule([](double t) { return std::sin(t); }, sdc, c,
                                                   0.0, 0.0, 0.5, 40.0);
  REQUIRE(!sched.times.empty());
  double t1 = sched.times[0];
  // first-crossing equation: (1 - cos t) + 0.5 t = N t + p
  CHECK(1 - std::cos(t1) + 0.5 * t1 == doctest::Approx(c.N * t1 + c.p).epsilon(1e-8));
  // bisection oracle for the same root
  auto f = [&](double t) { return 1 - std::cos(t) + 0.5 * t - (c.N * t + c.p); };
  double lo = 0.0, hi = t1 + 0.005;
  REQUIRE(f(lo) < 0);
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) < 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  CHECK(t1 == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-6));
  // no earlier crossing: scan the scheduled scan grid
  for (double t = 0.0; t < t1 - 0.01; t += 0.01) CHECK(f(t) < 0);
}

TEST_CASE("smoothing: no crossings means no change") {
  ScalarDichotomyConstants sdc;
  sdc.alpha = 0.5;
  CrossingConstants c;
  CrossingSchedule sched;
  sched.a_i = 0.0;
  sched.b_i = 0.0;
  sched.M_delta = 0.5;
  sched.horizon = 10.0;
  SmoothedSchedule sm = smooth_schedule(sched);
  CHECK(sm.discrepancy_bound == 0.0);
  sm.source = &sched;
  CHECK(sm.c_value(3.0) == sched.c_value(3.0));
  CHECK(sm.cumulative_target(7.0) == doctest::Approx(sched.cumulative_target(7.0)));
}

TEST_CASE("smoothing: ramp area matches the triangle formula") {
  CrossingSchedule sched;
  sched.a_i = -1.0;
  sched.b_i = 1.0;  // c jump height 2
  sched.M_delta = 0.0;
  sched.horizon = 20.0;
  sched.times = {10.0};
  SmoothedSchedule sm = smooth_schedule(sched);
  sm.source = &sched;
  REQUIRE(sm.half_width.size() == 1);
  double w = sm.half_width[0];
  CHECK(sm.discrepancy_bound == doctest::Approx(2.0 * w / 2));

  // quadrature of |c - c_bar| over the ramp
  double quad = integrate_scalar(
      [&](double t) { return std::fabs(sched.c_value(t) - sm.c_value(t)); }, 10.0 - w, 10.0 + w,
      1e-12, 1e-10);
  CHECK(quad == doctest::Approx(2.0 * w / 2).epsilon(1e-6));
  CHECK(quad <= 1.0);
}

TEST_CASE("channel scaling is the identity when the target matches the channel") {
  // d == a_i - M_delta on the whole horizon: Phi never crosses, lambda
  // stays at -M_delta, so d - (c + lambda) == 0 and mu == 1
  ScalarDichotomyConstants sdc;
  sdc.beta = 1.0;
  sdc.alpha = 0.5;
  sdc.eps = 0.0;
  sdc.lnK = 0.0;
  CrossingConstants c;
  c.N = 0.25;
  c.xi = 0.2;
  c.p = 1.0;
  c.xi_bar = -0.1;
  c.p_bar = -1.0;
  c.N_bar_floor = -0.25;
  auto d = [](double) { return -0.5; };
  CrossingSchedule sched = build_crossing_schedule(d, sdc, c, 0.0, 0.0, 0.5, 20.0);
  CHECK(sched.times.empty());
  CHECK(sched.partial);
  SmoothedSchedule sm = smooth_schedule(sched);
  ChannelScaling scaling = build_channel_scaling(d, sched, sm);
  for (double t : {0.0, 5.0, 17.0}) CHECK(scaling.log_mu(t) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("contract a constant scalar block") {
  auto tri = scalar_channel([](double) { return -2.0; }, 200.0, 2.5);
  auto params = ContractionParams::make(0.1, 1);
  ContractionOutput out = contract_block(tri, -2.05, -1.95, params);
  CHECK(out.K_delta_eps >= 2.0);
  const double bound = (params.delta / params.m_intervals) * out.K_delta_eps;
  for (double t : {0.0, 55.5, 133.3, 200.0}) {
    CHECK(spectral_norm(out.B(t)) <= bound * (1 + 1e-9));
    double cv = out.C(t)(0);
    CHECK(cv >= -2.05 - 1e-9);
    CHECK(cv <= -1.95 + 1e-9);
  }
}

TEST_CASE("contract a coupled upper-triangular block") {
  GeneralSystem sys;
  sys.n = 2;
  sys.horizon = 60.0;
  sys.A = [](double t) {
    Matrix m(2, 2);
    m << -1.0, std::exp(0.01 * t), 0.0, -1.0;
    return m;
  };
  TriangularSystem tri(sys.A, 2, 60.0, {3.0, 0.01});
  auto params = ContractionParams::make(0.5, 1);
  ContractionOutput out = contract_block(tri, -1.1, -0.9, params);

  // the assembled bound from the geometric tail
  double tail = out.K1 * out.K2 * out.eta / (1 - out.eta);
  double bound_split = out.M_delta * (1 + 2 * out.kappa * out.K_delta) + tail;
  double bound_final = (params.delta / params.m_intervals) * out.K_delta_eps;
  for (int i = 0; i <= 256; ++i) {
    double t = 60.0 * i / 256;
    double norm = spectral_norm(out.B(t));
    CHECK(norm <= bound_split * (1 + 1e-9));
    CHECK(norm <= bound_final * (1 + 1e-9));
  }
  CHECK(out.eta < out.M_delta / (out.M_delta + out.K1 * out.K2));
  CHECK(out.eta > 0.0);
}

TEST_CASE("full pipeline on a constant scalar system") {
  LinearSystem sys = parse_system("dim = 1\nhorizon = 200\nentries = [\"-2\"]\n");
  SpectrumResult spec = compute_spectrum(sys);
  ContractionOutput out = contract_system(sys, 0.1);
  CertificateReport report = certify(out, 0.1, spec);
  for (const auto& clause : report.clauses) CHECK(clause.pass);
  CHECK(report.all_pass());

  // negative control: inflate the perturbation tenfold
  ContractionOutput corrupted = out;
  auto base_b = out.B;
  corrupted.B = [base_b](double t) { return Matrix(10.0 * base_b(t)); };
  CertificateReport bad = certify(corrupted, 0.1, spec);
  CHECK(!bad.all_pass());
  bool clause_ii_failed = false;
  for (const auto& clause : bad.clauses) {
    if (clause.name == "perturbation_bound") clause_ii_failed = !clause.pass;
  }
  CHECK(clause_ii_failed);
}

TEST_CASE("smaller delta re-certifies") {
  LinearSystem sys = parse_system("dim = 1\nhorizon = 200\nentries = [\"-2\"]\n");
  SpectrumResult spec = compute_spectrum(sys);
  for (double delta : {0.1, 0.05}) {
    ContractionOutput out = contract_system(sys, delta);
    CertificateReport report = certify(out, delta, spec);
    CHECK(report.all_pass());
  }
}
