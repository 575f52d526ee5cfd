#pragma once

#include "nedspec/triangular.hpp"

namespace ned {

struct ContractionParams {
  double delta = 0.5;      // target smallness
  int m_intervals = 1;     // interval count of the spectrum
  double M_delta = 0.5;    // delta / m, set by make()
  double K_delta = 2.0;    // max(1, 1/M_delta)

  static ContractionParams make(double delta, int m_intervals);
};

/// Joint two-sided scalar dichotomy constants of the shifted channel
/// equations, with alpha > eps enforced by construction: ln beta is
/// minimized on the line alpha = eps + margin, then alpha - eps is pushed
/// up as far as the optimal beta allows.
struct ScalarDichotomyConstants {
  double beta = 1.0;   // >= 1
  double alpha = 0.0;  // > eps
  double eps = 0.0;
  double a_bar = 0.0;   // channel integral growth constants
  double eps_bar = 0.0;
  double lnK = 0.0;
};

struct CrossingConstants {
  double N = 0.0;
  double xi = 0.0;
  double p = 0.0;
  double xi_bar = 0.0;
  double p_bar = 0.0;
  double N_bar_floor = 0.0;
};

/// Alternating first-crossing times and the piecewise target functions.
struct CrossingSchedule {
  double a_i = 0.0, b_i = 0.0, M_delta = 0.0;
  double horizon = 0.0;
  std::vector<double> times;   // T_1 < T_2 < ... (T_0 = 0 implicit)
  std::vector<double> n_bar;   // two-point slope per even crossing
  bool partial = false;        // no further crossing before the horizon
  ScalarDichotomyConstants sdc;
  CrossingConstants constants;
  double Delta_bar = 0.0;  // verified |int (d - (c+lambda))| <= Delta_bar + upsilon t
  double upsilon = 0.0;

  double c_value(double t) const;       // a_i / b_i alternation
  double lambda_value(double t) const;  // -M_delta / +M_delta alternation
  int segment(double t) const;
  /// int_0^t (c + lambda), exact piecewise-linear cumulative
  double cumulative_target(double t) const;
};

/// Continuous version of the piecewise targets: linear ramps of half-width
/// w_l at each crossing, total absolute discrepancy <= 1.
struct SmoothedSchedule {
  const CrossingSchedule* source = nullptr;
  std::vector<double> half_width;  // per crossing
  double discrepancy_bound = 0.0;  // sum of ramp areas (<= 1)

  double c_value(double t) const;
  double lambda_value(double t) const;
  double cumulative_target(double t) const;  // int_0^t (c_bar + lambda_bar)
};

/// Diagonal transform L = diag(mu_r) with mu_r = exp(int (d_rr - target)).
struct ChannelScaling {
  std::function<double(double)> log_mu;  // ln mu_r(t)
  double Omega = 1.0;                    // ||L||, ||L^-1|| <= Omega e^(upsilon t)
  double upsilon = 0.0;
};

struct ChannelResult {
  CrossingSchedule schedule;
  SmoothedSchedule smoothed;
  ChannelScaling scaling;
};

/// Diagonal-plus-small output of one contracted block (or the assembled
/// system), with everything the certificate needs to re-check.
struct ContractionOutput {
  int dim = 0;
  double horizon = 0.0;
  double delta = 0.0;
  double M_delta = 0.0;
  double K_delta = 0.0;
  double eta = 0.0;
  double kappa = 0.0;        // kappa1 + kappa2
  double K1 = 0.0, kappa1 = 0.0;
  double K2 = 1.0, kappa2 = 0.0;
  double K_delta_eps = 0.0;  // 2 + n_i kappa K_delta (max over blocks)
  double upsilon = 0.0;      // transform growth rate
  double certified_until = 0.0;
  double last_crossing = 0.0;

  std::function<Vector(double)> C;  // diagonal values, inside the enclosure
  std::function<Matrix(double)> B;  // perturbation
  KinematicTransform transform;     // composed certificate transform
  std::function<Matrix(double)> original;  // coefficients being contracted
  /// ln of the diagonal scaling factors of the transform (the orthogonal
  /// part has unit norm, so these carry all growth). The dense transform
  /// under/overflows doubles at long horizons; bound checks use these.
  std::function<Vector(double)> log_diag;
  /// Transformed coefficients, evaluated through log-scale differences
  /// (never forms the dense transform).
  std::function<Matrix(double)> conjugated;

  std::vector<SpectralInterval> enclosure;        // one interval per block
  std::vector<std::vector<double>> crossing_times;  // per channel
  std::vector<ChannelResult> channels;              // per channel, block order
  std::vector<int> channel_block;                   // block index per channel
  double similarity_residual = 0.0;
};

struct CertificateClause {
  std::string name;
  bool pass = false;
  double worst_t = 0.0;
  double margin = 0.0;  // bound - worst value (>= 0 when passing)
};

struct CertificateReport {
  std::vector<CertificateClause> clauses;
  bool all_pass() const;
};

/// Step-2 constants for one diagonal channel over [a_i, b_i].
ScalarDichotomyConstants scalar_dichotomy_constants(const std::function<double(double)>& d,
                                                    double horizon, double a_i, double b_i,
                                                    double M_delta);

/// Deterministic midpoint policy on top of the fitted constants; verifies
/// the four admissibility conditions and throws naming the violated one.
CrossingConstants select_constants(const ScalarDichotomyConstants& sdc, double a_i, double b_i,
                                   double M_delta);

/// Alternating first-crossing construction. Root-finding is a fixed-step
/// scan followed by bisection, so earlier crossings are never skipped.
CrossingSchedule build_crossing_schedule(const std::function<double(double)>& d,
                                         const ScalarDichotomyConstants& sdc,
                                         const CrossingConstants& constants, double a_i, double b_i,
                                         double M_delta, double horizon);

SmoothedSchedule smooth_schedule(const CrossingSchedule& schedule);

ChannelScaling build_channel_scaling(const std::function<double(double)>& d,
                                     const CrossingSchedule& schedule,
                                     const SmoothedSchedule& smoothed);

/// Steps 2-4 on one triangular block whose spectrum sits in [a_i, b_i].
ContractionOutput contract_block(const TriangularSystem& D, double a_i, double b_i,
                                 const ContractionParams& params);

/// Full pipeline: spectrum, per-block triangularization, per-block
/// contraction with M_delta = delta / m, block-diagonal assembly.
ContractionOutput contract_system(const LinearSystem& system, double delta, SweepPlan plan = {});
ContractionOutput contract_system(const GeneralSystem& system, double delta, SweepPlan plan = {});

/// Independent re-check of the four certificate clauses on a fresh grid.
CertificateReport certify(const ContractionOutput& output, double delta,
                          const SpectrumResult& spectrum, int grid_points = 2048);

}  // namespace ned
