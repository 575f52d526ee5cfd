#pragma once

namespace ned::defaults {

// Half-line truncation. All dichotomy/spectrum outputs are horizon-T estimates.
inline constexpr double horizon = 200.0;

// flow
inline constexpr double checkpoint_dt = 0.5;
// per-checkpoint-step log-range budget; steps shrink where ||A|| is large
// so that no matrix entry decays below relative accuracy within one step
inline constexpr double checkpoint_log_budget = 6.0;
inline constexpr double integ_abs_tol = 1e-13;
inline constexpr double integ_rel_tol = 1e-10;
inline constexpr double inverse_residual_tol = 1e-10;
inline constexpr double growth_fit_ceiling = 0.5;  // ln K0 budget in fit_growth

// dichotomy admissibility
inline constexpr double alpha_min = 0.01;
inline constexpr double gap_min = 2.0;        // ln units, factor e^2
inline constexpr double ln_K_max = 1.0;       // transient budget of a verdict
inline constexpr double eps_margin = 0.25;    // eps_max = fitted eps_bar + this
inline constexpr int sample_pairs = 400;
inline constexpr int lattice_side = 20;       // deterministic pair lattice

// spectrum
inline constexpr double endpoint_tol = 0.05;
inline constexpr int sweep_points = 64;

// contraction
inline constexpr double alpha_eps_margin = 0.02;  // enforced alpha - eps >= this
inline constexpr double crossing_scan_dt = 0.01;
inline constexpr double root_tol = 1e-10;

inline constexpr double overflow_log_norm = 690.0;  // ~ln(1e300)

}  // namespace ned::defaults
