#pragma once

#include "nedspec/dichotomy.hpp"

namespace ned {

struct SpectralInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool degenerate = false;       // localized by a rank jump, width = 2 tol
  bool possibly_merged = false;  // closer than 2 tol to a neighbor
};

struct ResolventSample {
  double lambda = 0.0;
  bool admits = false;
  int rank = 0;
  double K = 1.0, alpha = 0.0, eps = 0.0;
};

struct SpectrumResult {
  std::vector<SpectralInterval> intervals;
  std::vector<ResolventSample> samples;  // sweep trace, sorted by lambda
  double tolerance = defaults::endpoint_tol;

  /// Structural invariants: 1 <= m <= n, sorted, disjoint, resolvent ranks
  /// constant between intervals and strictly increasing across them.
  void validate(int dim) const;
};

/// Resolvent-guaranteed sweep bracket [-(a+eps_bar+1), a+eps_bar+1].
std::pair<double, double> bracket(const GrowthEstimate& growth);

struct SweepPlan {
  int coarse_points = defaults::sweep_points;
  double endpoint_tol = defaults::endpoint_tol;
  SamplingPlan sampling;
  bool parallel = true;
};

/// Sweeps and bisects the shift line: coarse classification over the
/// bracket, bisection refinement of every resolvent/spectrum transition,
/// rank-jump localization of intervals narrower than the coarse step.
SpectrumResult compute_spectrum(const LinearSystem& system, SweepPlan plan = {});
SpectrumResult compute_spectrum(const GeneralSystem& system, SweepPlan plan = {});

/// Same, reusing an existing tester (the sweep is pure per shift).
SpectrumResult compute_spectrum(const DichotomyTester& tester, SweepPlan plan = {});

/// Interval union for block-diagonal systems; touching endpoints merge.
SpectrumResult union_block_spectrum(const SpectrumResult& s1, const SpectrumResult& s2);

}  // namespace ned
