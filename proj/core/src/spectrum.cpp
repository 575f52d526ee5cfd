#include "nedspec/spectrum.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <thread>

namespace ned {

void SpectrumResult::validate(int dim) const {
  const size_t m = intervals.size();
  if (m < 1) throw Error("spectrum", "empty spectrum (expected at least one interval)");
  if (m > static_cast<size_t>(dim)) {
    throw Error("spectrum", "found " + std::to_string(m) + " intervals for dimension " +
                                std::to_string(dim));
  }
  for (size_t i = 0; i < m; ++i) {
    if (intervals[i].lo > intervals[i].hi) throw Error("spectrum", "interval with lo > hi");
    if (i + 1 < m && intervals[i].hi >= intervals[i + 1].lo) {
      throw Error("spectrum", "intervals overlap or are unsorted");
    }
  }
  // rank staircase over resolvent samples; samples inside an interval
  // enclosure (tolerance padding around a rank jump) carry no gap rank
  int prev_rank = -1;
  double prev_lambda = -std::numeric_limits<double>::infinity();
  auto gap_index = [&](double lambda) -> std::optional<size_t> {
    size_t g = 0;
    while (g < m && lambda > intervals[g].hi) ++g;
    if (g < m && lambda >= intervals[g].lo) return std::nullopt;  // inside
    return g;
  };
  size_t prev_gap = std::numeric_limits<size_t>::max();
  for (const auto& s : samples) {
    if (s.lambda < prev_lambda) throw Error("spectrum", "sweep trace not sorted");
    prev_lambda = s.lambda;
    if (!s.admits) continue;
    auto g = gap_index(s.lambda);
    if (!g) continue;
    if (prev_rank >= 0) {
      if (*g == prev_gap && s.rank != prev_rank) {
        throw Error("spectrum", "projector rank varies inside a resolvent gap");
      }
      if (*g != prev_gap && prev_gap != std::numeric_limits<size_t>::max() && s.rank <= prev_rank) {
        throw Error("spectrum", "projector rank not increasing across a spectral interval");
      }
    }
    prev_rank = s.rank;
    prev_gap = *g;
  }
}

std::pair<double, double> bracket(const GrowthEstimate& growth) {
  double h = growth.a + growth.eps_bar + 1.0;
  return {-h, h};
}

namespace {

ResolventSample to_sample(const DichotomyVerdict& v) {
  return {v.lambda, v.admits, v.projector_rank, v.K, v.alpha, v.eps};
}

// Bisection between an admitting and a rejecting shift, to tolerance.
// Returns the last admitting lambda on the resolvent side.
double refine_edge(const DichotomyTester& tester, double lam_admit, double lam_reject, double tol,
                   std::vector<ResolventSample>& trace) {
  while (std::fabs(lam_admit - lam_reject) > tol) {
    double mid = 0.5 * (lam_admit + lam_reject);
    DichotomyVerdict v = tester.test(mid);
    trace.push_back(to_sample(v));
    if (v.admits) {
      lam_admit = mid;
    } else {
      lam_reject = mid;
    }
  }
  return lam_reject;
}

// Rank transition point between two admitting shifts (hidden narrow
// interval); rank is monotone in lambda.
double refine_rank_jump(const DichotomyTester& tester, double lo, int rank_lo, double hi,
                        double tol) {
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    auto r = tester.rank_at(mid);
    if (r && *r <= rank_lo) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SpectrumResult compute_spectrum(const DichotomyTester& tester, SweepPlan plan) {
  auto [lam_min, lam_max] = bracket(tester.growth());
  const int points = std::max(8, plan.coarse_points);

  std::vector<double> grid(points + 1);
  for (int i = 0; i <= points; ++i) grid[i] = lam_min + (lam_max - lam_min) * i / points;

  std::vector<DichotomyVerdict> verdicts(grid.size());
  if (plan.parallel) {
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= grid.size()) return;
        verdicts[i] = tester.test(grid[i]);
      }
    };
    std::vector<std::future<void>> futs;
    for (unsigned w = 0; w + 1 < workers && w + 1 < grid.size(); ++w) {
      futs.push_back(std::async(std::launch::async, worker));
    }
    worker();
    for (auto& f : futs) f.get();
  } else {
    for (size_t i = 0; i < grid.size(); ++i) verdicts[i] = tester.test(grid[i]);
  }

  // rank monotonicity across admitting samples; re-test once at doubled
  // sampling before giving up
  std::unique_ptr<DichotomyTester> retester;
  auto retest = [&](size_t i) {
    if (!retester) {
      SamplingPlan p2 = tester.plan();
      p2.pair_count *= 2;
      p2.seed += 7;
      retester = std::make_unique<DichotomyTester>(tester.general(), p2);
    }
    verdicts[i] = retester->test(grid[i]);
  };
  for (size_t pass = 0; pass < 2; ++pass) {
    int prev_rank = -1;
    bool bad = false;
    for (size_t i = 0; i < verdicts.size(); ++i) {
      if (!verdicts[i].admits) continue;
      if (verdicts[i].projector_rank < prev_rank) {
        if (pass == 1) throw Error("spectrum", "projector rank decreased along the sweep");
        retest(i);
        bad = true;
      }
      prev_rank = verdicts[i].projector_rank;
    }
    if (!bad) break;
  }

  if (!verdicts.front().admits || !verdicts.back().admits) {
    throw Error("spectrum", "bracket endpoint not in the resolvent; growth fit too tight");
  }

  SpectrumResult out;
  out.tolerance = plan.endpoint_tol;
  for (size_t i = 0; i < verdicts.size(); ++i) out.samples.push_back(to_sample(verdicts[i]));

  // runs of rejecting shifts -> intervals with bisected edges
  size_t i = 0;
  while (i < verdicts.size()) {
    if (verdicts[i].admits) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j + 1 < verdicts.size() && !verdicts[j + 1].admits) ++j;
    SpectralInterval iv;
    iv.lo = refine_edge(tester, grid[i - 1], grid[i], plan.endpoint_tol, out.samples);
    iv.hi = refine_edge(tester, grid[j + 1], grid[j], plan.endpoint_tol, out.samples);
    out.intervals.push_back(iv);
    i = j + 1;
  }

  // hidden intervals: rank jumps between consecutive admitting shifts
  for (size_t k = 0; k + 1 < verdicts.size(); ++k) {
    if (!verdicts[k].admits || !verdicts[k + 1].admits) continue;
    int lo_rank = verdicts[k].projector_rank;
    int hi_rank = verdicts[k + 1].projector_rank;
    double lo = grid[k];
    while (hi_rank > lo_rank) {
      double c = refine_rank_jump(tester, lo, lo_rank, grid[k + 1], plan.endpoint_tol);
      SpectralInterval iv;
      iv.lo = c - plan.endpoint_tol;
      iv.hi = c + plan.endpoint_tol;
      iv.degenerate = true;
      out.intervals.push_back(iv);
      lo = c + plan.endpoint_tol;
      auto r = tester.rank_at(std::min(lo, grid[k + 1]));
      lo_rank = r ? *r : hi_rank;
    }
  }

  std::sort(out.intervals.begin(), out.intervals.end(),
            [](const SpectralInterval& a, const SpectralInterval& b) { return a.lo < b.lo; });
  std::sort(out.samples.begin(), out.samples.end(),
            [](const ResolventSample& a, const ResolventSample& b) { return a.lambda < b.lambda; });

  for (size_t k = 0; k + 1 < out.intervals.size(); ++k) {
    if (out.intervals[k + 1].lo - out.intervals[k].hi < 2 * plan.endpoint_tol) {
      out.intervals[k].possibly_merged = true;
      out.intervals[k + 1].possibly_merged = true;
    }
  }

  out.validate(tester.dim());
  return out;
}

SpectrumResult compute_spectrum(const LinearSystem& system, SweepPlan plan) {
  DichotomyTester tester(system, plan.sampling);
  return compute_spectrum(tester, plan);
}

SpectrumResult compute_spectrum(const GeneralSystem& system, SweepPlan plan) {
  DichotomyTester tester(system, plan.sampling);
  return compute_spectrum(tester, plan);
}

SpectrumResult union_block_spectrum(const SpectrumResult& s1, const SpectrumResult& s2) {
  SpectrumResult out;
  out.tolerance = std::max(s1.tolerance, s2.tolerance);
  std::vector<SpectralInterval> all = s1.intervals;
  all.insert(all.end(), s2.intervals.begin(), s2.intervals.end());
  std::sort(all.begin(), all.end(),
            [](const SpectralInterval& a, const SpectralInterval& b) { return a.lo < b.lo; });
  for (const auto& iv : all) {
    if (!out.intervals.empty() && iv.lo <= out.intervals.back().hi) {
      out.intervals.back().hi = std::max(out.intervals.back().hi, iv.hi);
      out.intervals.back().degenerate = false;
    } else {
      out.intervals.push_back(iv);
    }
  }
  out.samples = s1.samples;
  out.samples.insert(out.samples.end(), s2.samples.begin(), s2.samples.end());
  std::sort(out.samples.begin(), out.samples.end(),
            [](const ResolventSample& a, const ResolventSample& b) { return a.lambda < b.lambda; });
  return out;
}

}  // namespace ned
