#pragma once

#include <memory>
#include <optional>

#include "nedspec/flow.hpp"

namespace ned {

/// View of x' = (A(t) - lambda I) x. Transitions are the base transitions
/// rescaled by exp(-lambda (t-s)); nothing is re-integrated.
struct ShiftedSystem {
  const TransitionOperator* base;
  double lambda = 0.0;

  double log_norm_transition(double t, double s) const {
    return base->log_norm_transition(t, s) - lambda * (t - s);
  }
  ScaledMatrix transition_scaled(double t, double s) const {
    ScaledMatrix out = base->transition_scaled(t, s);
    out.log_scale -= lambda * (t - s);
    return out;
  }
};

inline ShiftedSystem shift_system(const TransitionOperator& op, double lambda) {
  return ShiftedSystem{&op, lambda};
}

struct SamplingPlan {
  int pair_count = defaults::sample_pairs;
  unsigned seed = 20240901;
  double alpha_min = defaults::alpha_min;
  double eps_max = -1.0;    // < 0: per-block fitted eps_bar + eps_margin
  double ln_K_max = defaults::ln_K_max;
  double gap_min = defaults::gap_min;
  double split_time = -1.0;  // < 0: min(horizon, 40 / alpha_min)
};

struct DichotomyVerdict {
  double lambda = 0.0;
  bool admits = false;
  double K = 1.0;
  double alpha = 0.0;
  double eps = 0.0;
  int projector_rank = 0;
  Matrix stable_basis;  // n x rank, orthonormal, at t = 0
  double margin = 0.0;  // ln K budget left by the fit
  bool gap_fail = false;
  bool overflow = false;
  bool eps_ge_alpha = false;
  double eps_cap = 0.0;
};

/// Finite-time exponents and subspace basis of the shifted operator at the
/// split time. rank = number of decaying directions; stable_basis spans
/// them at time 0. Throws when some exponent sits within gap_min/2 of the
/// neutral line (lambda likely in the spectrum).
std::pair<int, Matrix> estimate_projector(const ShiftedSystem& shifted, double split_time,
                                          double gap_min = defaults::gap_min);

/// Reusable tester: caches the transition data, per-block growth fits and
/// per-rank sample tables once, then answers any number of shifts. Pure
/// and safe for concurrent test() calls after construction.
class DichotomyTester {
public:
  DichotomyTester(const GeneralSystem& system, SamplingPlan plan = {});
  DichotomyTester(const LinearSystem& system, SamplingPlan plan = {})
      : DichotomyTester(as_general(system), plan) {}
  ~DichotomyTester();
  DichotomyTester(DichotomyTester&&) noexcept;

  DichotomyVerdict test(double lambda) const;

  /// Rank alone (no envelope fit); gap failures return nullopt.
  std::optional<int> rank_at(double lambda) const;

  const GrowthEstimate& growth() const;
  const SamplingPlan& plan() const;
  const GeneralSystem& general() const;
  int dim() const;
  double horizon() const;
  int block_count() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot form of the operation.
DichotomyVerdict test_dichotomy(const LinearSystem& system, double lambda, SamplingPlan plan = {});

}  // namespace ned
