#include <doctest.h>

#include <cmath>
#include <random>

#include "nedspec/flow.hpp"

using namespace ned;

namespace {

LinearSystem scalar_system(const std::string& entry, double horizon) {
  return parse_system("dim = 1\nhorizon = " + std::to_string(horizon) + "\nentries = [\"" + entry +
                      "\"]\n");
}

// Closed form of the example-1 log transition: integral of l0 + a tau sin(tau)
double example1_log_phi(double lambda0, double a, double t, double s) {
  auto antider = [&](double x) { return lambda0 * x + a * (std::sin(x) - x * std::cos(x)); };
  return antider(t) - antider(s);
}

}  // namespace

TEST_CASE("transition at equal times is the identity") {
  auto sys = scalar_system("sin(t) - 0.3", 40);
  TransitionOperator op(sys);
  CHECK((op.transition(5.0, 5.0) - Matrix::Identity(1, 1)).norm() == doctest::Approx(0.0));
}

TEST_CASE("constant scalar transition") {
  auto sys = scalar_system("-1", 40);
  TransitionOperator op(sys);
  CHECK(op.transition(3.0, 1.0)(0, 0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-9));
  CHECK(op.transition(1.0, 3.0)(0, 0) == doctest::Approx(std::exp(2.0)).epsilon(1e-9));
}

TEST_CASE("example 1 transition against the closed form and a quadrature oracle") {
  auto sys = scalar_system("-2 - 1*t*sin(t)", 30);
  TransitionOperator op(sys);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(0.0, 30.0);
  for (int i = 0; i < 20; ++i) {
    double t = uni(rng), s = uni(rng);
    double expect = example1_log_phi(-2, -1, t, s);
    // independent quadrature oracle for the same integral
    double quad = integrate_scalar(
        [](double tau) { return -2 - tau * std::sin(tau); }, s, t);
    CHECK(quad == doctest::Approx(expect).epsilon(1e-10));
    CHECK(op.log_norm_transition(t, s) == doctest::Approx(expect).epsilon(1e-8));
  }
}

TEST_CASE("cocycle property on 200 random triples") {
  auto sys = scalar_system("-2 - 1*t*sin(t)", 40);
  TransitionOperator op(sys);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(0.0, 40.0);
  std::vector<std::array<double, 3>> triples;
  for (int i = 0; i < 200; ++i) triples.push_back({uni(rng), uni(rng), uni(rng)});
  CHECK(op.cocycle_defect(triples) <= 1e-8);
}

TEST_CASE("inverse consistency") {
  LinearSystem sys = parse_system(
      "dim = 2\nhorizon = 20\nentries = [\"-0.5\", \"sin(t)\", \"0.1\", \"0.3*cos(t)\"]\n");
  TransitionOperator op(sys);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(0.0, 20.0);
  for (int i = 0; i < 40; ++i) {
    double t = uni(rng), s = uni(rng);
    Matrix fwd = op.transition(t, s);
    Matrix bwd = op.transition(s, t);
    CHECK((fwd * bwd - Matrix::Identity(2, 2)).norm() <= 1e-8 * fwd.norm() * bwd.norm());
  }
}

TEST_CASE("determinant matches the trace integral") {
  LinearSystem sys = parse_system(
      "dim = 2\nhorizon = 20\nentries = [\"-0.5\", \"sin(t)\", \"0.1\", \"0.3*cos(t)\"]\n");
  TransitionOperator op(sys);
  for (double t : {3.0, 11.5, 20.0}) {
    double det = op.transition(t, 0.0).determinant();
    double trace_integral = integrate_scalar(
        [&sys](double tau) { return sys.A.eval(tau).trace(); }, 0.0, t);
    CHECK(det == doctest::Approx(std::exp(trace_integral)).epsilon(1e-7));
  }
}

TEST_CASE("scalar log transitions") {
  auto zero = scalar_system("0", 20);
  CHECK(scalar_log_transition(zero, 7.0, 2.0) == doctest::Approx(0.0));

  auto sine = scalar_system("sin(t)", 20);
  CHECK(scalar_log_transition(sine, M_PI, 0.0) == doctest::Approx(2.0).epsilon(1e-9));

  auto e2 = scalar_system("sin(ln(t+1)) + cos(ln(t+1))", 20);
  double expect = std::exp(1.0) * std::sin(1.0);  // antiderivative (t+1) sin(ln(t+1))
  CHECK(scalar_log_transition(e2, std::exp(1.0) - 1.0, 0.0) ==
        doctest::Approx(expect).epsilon(1e-9));

  // agreement with the log of the transition operator
  auto e1 = scalar_system("-2 - 1*t*sin(t)", 20);
  TransitionOperator op(e1);
  CHECK(scalar_log_transition(e1, 7.0, 2.0) ==
        doctest::Approx(std::log(op.transition(7.0, 2.0)(0, 0))).epsilon(1e-9));
}

TEST_CASE("growth fit: constant diagonal") {
  LinearSystem sys = parse_system("dim = 2\nhorizon = 200\nentries = [\"-1\", \"0\", \"0\", \"2\"]\n");
  TransitionOperator op(sys);
  auto pairs = make_sample_pairs(200.0, 400, 101);
  GrowthEstimate g = fit_growth(op, pairs);
  CHECK(g.a == doctest::Approx(2.0).epsilon(0.025));
  CHECK(g.eps_bar <= 0.05);
  CHECK(g.K0 <= 2.0);
  CHECK(g.K0 >= 1.0);
  CHECK(g.fit_residual <= 0.0);
}

TEST_CASE("growth fit: zero system") {
  auto sys = scalar_system("0", 200);
  TransitionOperator op(sys);
  GrowthEstimate g = fit_growth(op, make_sample_pairs(200.0, 400, 77));
  CHECK(g.K0 == doctest::Approx(1.0));
  CHECK(g.a == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(g.eps_bar == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("growth fit: example 1 is strictly nonuniform") {
  auto sys = scalar_system("-2 - 1*t*sin(t)", 200);
  ScalarFlow q(sys);
  ScalarPairOracle oracle(q, 12.0);
  GrowthEstimate g = fit_growth_scalar(oracle);
  CHECK(g.eps_bar > 0.5);
  CHECK(g.eps_bar < 2.2);
  CHECK(g.fit_residual <= 0.0);

  // envelope majorizes fresh samples with bounded slack
  auto fresh = make_sample_pairs(200.0, 4000, 56);
  double worst = -1e300;
  for (auto [t, s] : fresh) {
    double y = q.log_transition(t, s);
    double bound = std::log(g.K0) + g.a * std::fabs(t - s) + g.eps_bar * std::min(t, s);
    worst = std::max(worst, y - bound);
  }
  CHECK(worst <= 0.1);
}

TEST_CASE("degenerate samples are rejected") {
  std::vector<std::array<double, 3>> samples;
  for (int i = 0; i < 200; ++i) samples.push_back({double(i), double(i), 0.0});
  CHECK_THROWS_AS(fit_growth_from_samples(samples), Error);
}

TEST_CASE("checkpoint diagnostics are monotone in time") {
  auto sys = scalar_system("-1", 10);
  TransitionOperator op(sys);
  auto rows = op.checkpoint_diagnostics();
  REQUIRE(rows.size() > 3);
  CHECK(rows.front()[0] == doctest::Approx(0.0));
  CHECK(rows.back()[0] == doctest::Approx(10.0));
  CHECK(rows.back()[1] == doctest::Approx(-10.0).epsilon(1e-6));
}
