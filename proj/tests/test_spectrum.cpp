#include <doctest.h>

#include <cmath>

#include "nedspec/spectrum.hpp"

using namespace ned;

namespace {

SpectrumResult make_result(std::vector<std::pair<double, double>> intervals, double tol = 0.05) {
  SpectrumResult s;
  for (auto [lo, hi] : intervals) s.intervals.push_back({lo, hi});
  s.tolerance = tol;
  return s;
}

}  // namespace

TEST_CASE("bracket formulas") {
  CHECK(bracket({1.0, 0.0, 0.0, 0.0}) == std::pair{-1.0, 1.0});
  CHECK(bracket({1.0, 2.0, 0.0, 0.0}) == std::pair{-3.0, 3.0});
  auto [lo, hi] = bracket({1.5, 1.0, 0.5, 0.0});
  CHECK(lo == doctest::Approx(-2.5));
  CHECK(hi == doctest::Approx(2.5));
}

TEST_CASE("constant scalar spectrum is a degenerate point") {
  LinearSystem sys = parse_system("dim = 1\nhorizon = 200\nentries = [\"-2\"]\n");
  SpectrumResult s = compute_spectrum(sys);
  REQUIRE(s.intervals.size() == 1);
  CHECK(s.intervals[0].degenerate);
  CHECK(s.intervals[0].hi - s.intervals[0].lo <= 2 * s.tolerance + 1e-12);
  double mid = 0.5 * (s.intervals[0].lo + s.intervals[0].hi);
  CHECK(mid == doctest::Approx(-2.0).epsilon(0.05));
}

TEST_CASE("decoupled saddle has two degenerate intervals and a rank staircase") {
  LinearSystem sys = parse_system("dim = 2\nhorizon = 200\nentries = [\"-1\", \"0\", \"0\", \"1\"]\n");
  SpectrumResult s = compute_spectrum(sys);
  REQUIRE(s.intervals.size() == 2);
  CHECK(0.5 * (s.intervals[0].lo + s.intervals[0].hi) == doctest::Approx(-1.0).epsilon(0.06));
  CHECK(0.5 * (s.intervals[1].lo + s.intervals[1].hi) == doctest::Approx(1.0).epsilon(0.06));
  // ranks: 0 below, 1 between, 2 above
  int lo_rank = -1, mid_rank = -1, hi_rank = -1;
  for (const auto& smp : s.samples) {
    if (!smp.admits) continue;
    if (smp.lambda < s.intervals[0].lo) lo_rank = smp.rank;
    else if (smp.lambda > s.intervals[0].hi && smp.lambda < s.intervals[1].lo) mid_rank = smp.rank;
    else if (smp.lambda > s.intervals[1].hi && hi_rank < 0) hi_rank = smp.rank;
  }
  CHECK(lo_rank == 0);
  CHECK(mid_rank == 1);
  CHECK(hi_rank == 2);
}

TEST_CASE("example 1 spectrum at a reduced horizon") {
  auto e1 = builtin_example("example1", {{"lambda0", -2.0}, {"a", -1.0}}, 60.0);
  SweepPlan plan;
  plan.endpoint_tol = 0.05;
  SpectrumResult s = compute_spectrum(e1.system, plan);
  REQUIRE(s.intervals.size() == 1);
  CHECK(s.intervals[0].lo == doctest::Approx(-3.0).epsilon(0.05));
  CHECK(s.intervals[0].hi == doctest::Approx(-1.0).epsilon(0.08));
}

TEST_CASE("shift covariance") {
  // spectrum of A - cI equals spectrum of A shifted by -c
  auto base = builtin_example("example1", {{"lambda0", -2.0}, {"a", -1.0}}, 60.0);
  const double c = 0.37;
  LinearSystem shifted = parse_system(
      "dim = 1\nhorizon = 60\nentries = [\"-2 - 1*t*sin(t) - 0.37\"]\n");
  SpectrumResult s0 = compute_spectrum(base.system);
  SpectrumResult s1 = compute_spectrum(shifted);
  REQUIRE(s0.intervals.size() == 1);
  REQUIRE(s1.intervals.size() == 1);
  CHECK(s1.intervals[0].lo == doctest::Approx(s0.intervals[0].lo - c).epsilon(0.1));
  CHECK(s1.intervals[0].hi == doctest::Approx(s0.intervals[0].hi - c).epsilon(0.1));
}

TEST_CASE("interval union") {
  // disjoint points stay separate
  SpectrumResult u1 = union_block_spectrum(make_result({{-2.0, -2.0}}), make_result({{3.0, 3.0}}));
  REQUIRE(u1.intervals.size() == 2);

  // touching endpoints merge
  SpectrumResult u2 =
      union_block_spectrum(make_result({{-3.0, -1.0}}), make_result({{-1.0, 1.0}}));
  REQUIRE(u2.intervals.size() == 1);
  CHECK(u2.intervals[0].lo == doctest::Approx(-3.0));
  CHECK(u2.intervals[0].hi == doctest::Approx(1.0));

  // the planar reference union
  SpectrumResult u3 =
      union_block_spectrum(make_result({{-5.0, -3.0}}), make_result({{-1.0, 1.0}}));
  REQUIRE(u3.intervals.size() == 2);
  CHECK(u3.intervals[0].lo == doctest::Approx(-5.0));
  CHECK(u3.intervals[1].hi == doctest::Approx(1.0));
}

TEST_CASE("structure validation rejects malformed results") {
  SpectrumResult bad = make_result({{-1.0, 1.0}, {0.5, 2.0}});  // overlap
  CHECK_THROWS_AS(bad.validate(2), Error);
  SpectrumResult too_many = make_result({{-3.0, -2.0}, {-1.0, 0.0}, {1.0, 2.0}});
  CHECK_THROWS_AS(too_many.validate(2), Error);
  SpectrumResult empty;
  empty.tolerance = 0.05;
  CHECK_THROWS_AS(empty.validate(1), Error);
}

TEST_CASE("near intervals are flagged, not merged") {
  auto s1 = make_result({{-1.0, -0.5}});
  auto s2 = make_result({{-0.42, 0.3}});
  SpectrumResult u = union_block_spectrum(s1, s2);
  REQUIRE(u.intervals.size() == 2);  // gap 0.08 < 2 tol but no silent merge
}

TEST_CASE("sweep trace carries fitted constants") {
  LinearSystem sys = parse_system("dim = 1\nhorizon = 200\nentries = [\"-1\"]\n");
  SpectrumResult s = compute_spectrum(sys);
  bool saw_admit = false;
  for (const auto& smp : s.samples) {
    if (smp.admits) {
      saw_admit = true;
      CHECK(smp.K >= 1.0);
      CHECK(smp.alpha >= 0.0);
    }
  }
  CHECK(saw_admit);
}
