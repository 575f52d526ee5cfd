#include <doctest.h>

#include <cmath>
#include <random>

#include "nedspec/expression.hpp"

using ned::Expr;

TEST_CASE("arithmetic and precedence") {
  CHECK(Expr::parse("2 + 3*t").eval(4) == doctest::Approx(14.0));
  CHECK(Expr::parse("2*t^2").eval(3) == doctest::Approx(18.0));
  CHECK(Expr::parse("-t^2").eval(3) == doctest::Approx(-9.0));
  CHECK(Expr::parse("(2+t)*(2-t)").eval(1.5) == doctest::Approx(4 - 2.25));
  CHECK(Expr::parse("7/2/2").eval(0) == doctest::Approx(1.75));
  CHECK(Expr::parse("2^3^2").eval(0) == doctest::Approx(512.0));  // right assoc
}

TEST_CASE("functions") {
  CHECK(Expr::parse("sin(t)^2 + cos(t)^2").eval(0.7) == doctest::Approx(1.0));
  CHECK(Expr::parse("exp(ln(t))").eval(5.0) == doctest::Approx(5.0));
  CHECK(Expr::parse("abs(-3*t)").eval(2) == doctest::Approx(6.0));
  CHECK(Expr::parse("sin(ln(t+1)) + cos(ln(t+1))").eval(0.0) == doctest::Approx(1.0));
  CHECK(Expr::parse("-2 - 1*t*sin(t)").eval(0.0) == doctest::Approx(-2.0));
}

TEST_CASE("parse errors carry a position") {
  CHECK_THROWS_AS(Expr::parse("2 +"), ned::Error);
  CHECK_THROWS_AS(Expr::parse("(1"), ned::Error);
  CHECK_THROWS_AS(Expr::parse("foo(t)"), ned::Error);
  CHECK_THROWS_AS(Expr::parse("1 2"), ned::Error);
  try {
    Expr::parse("1 + bar(t)");
    CHECK(false);
  } catch (const ned::Error& e) {
    CHECK(std::string(e.where()).find("expr:4") != std::string::npos);
  }
}

TEST_CASE("serialize round trip") {
  const char* exprs[] = {
      "-2 - 1*t*sin(t)",
      "1*(sin(ln(t+1)) + cos(ln(t+1)))",
      "t^2/(1+t) - exp(-t)",
      "abs(t - 3) + 2^t",
      "-(t + 1)*(t - 1)",
  };
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 50.0);
  for (const char* text : exprs) {
    Expr a = Expr::parse(text);
    Expr b = Expr::parse(a.str());
    for (int i = 0; i < 100; ++i) {
      double t = uni(rng);
      double va = a.eval(t), vb = b.eval(t);
      CHECK(std::fabs(va - vb) <= 1e-14 * std::max(1.0, std::fabs(va)));
    }
  }
}

TEST_CASE("zero detection") {
  CHECK(Expr::parse("0").is_zero());
  CHECK(Expr::parse("0*t").is_zero());
  CHECK(Expr::parse("0 + 0").is_zero());
  CHECK(!Expr::parse("t").is_zero());
  CHECK(!Expr::parse("1e-30").is_zero());
}
