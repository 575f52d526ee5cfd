#include <doctest.h>

#include <json.hpp>

#include "nedspec/report.hpp"
#include "nedspec/spectrum.hpp"

using namespace ned;

TEST_CASE("doubles render as shortest round trip") {
  for (double v : {0.1, -3.0041, 1.0 / 3.0, 6.02e23, -1e-12}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.0) == "-2");
}

TEST_CASE("verdict json carries the contract fields") {
  DichotomyVerdict v;
  v.lambda = -0.5;
  v.admits = true;
  v.K = 2.0;
  v.alpha = 0.105;
  v.eps = 2.05;
  v.projector_rank = 1;
  v.margin = 0.3;
  auto j = nlohmann::json::parse(verdict_to_json(v));
  CHECK(j["lambda"] == -0.5);
  CHECK(j["admits"] == true);
  CHECK(j["K"] == 2.0);
  CHECK(j["alpha"] == 0.105);
  CHECK(j["eps"] == 2.05);
  CHECK(j["rank"] == 1);
  CHECK(j["margin"] == 0.3);
}

TEST_CASE("spectrum json and sweep csv") {
  SpectrumResult s;
  s.intervals.push_back({-3.0, -1.0});
  s.intervals.push_back({0.5, 0.6, true, false});
  s.tolerance = 0.05;
  s.samples.push_back({-4.0, true, 0, 2.0, 1.0, 0.1});
  s.samples.push_back({-2.0, false, 0, 1.0, 0.0, 0.0});

  auto j = nlohmann::json::parse(spectrum_to_json(s));
  REQUIRE(j["intervals"].size() == 2);
  CHECK(j["intervals"][0][0] == -3.0);
  CHECK(j["tolerance"] == 0.05);
  CHECK(j["flags"][1]["degenerate"] == true);

  std::string csv = sweep_to_csv(s);
  CHECK(csv.rfind("lambda,admits,rank,alpha,eps,K\r\n", 0) == 0);
  CHECK(csv.find("-4,1,0,1,0.1,2\r\n") != std::string::npos);
  CHECK(csv.find("-2,0,0,0,0,1\r\n") != std::string::npos);
}

TEST_CASE("csv is RFC 4180 line-terminated") {
  LinearSystem sys = parse_system("dim = 1\nhorizon = 10\nentries = [\"-1\"]\n");
  TransitionOperator op(sys);
  std::string csv = checkpoints_to_csv(op);
  CHECK(csv.find("\r\n") != std::string::npos);
  CHECK(csv.rfind("t,log_norm,cond\r\n", 0) == 0);
}

TEST_CASE("identical seeds give identical artifacts") {
  LinearSystem sys = parse_system("dim = 1\nhorizon = 100\nentries = [\"-1\"]\n");
  SweepPlan plan;
  plan.sampling.seed = 7;
  std::string a = spectrum_to_json(compute_spectrum(sys, plan));
  std::string b = spectrum_to_json(compute_spectrum(sys, plan));
  CHECK(a == b);
  std::string ca = sweep_to_csv(compute_spectrum(sys, plan));
  std::string cb = sweep_to_csv(compute_spectrum(sys, plan));
  CHECK(ca == cb);
}
