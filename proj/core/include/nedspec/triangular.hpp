#pragma once

#include "nedspec/spectrum.hpp"

namespace ned {

/// Invertible change of variables y = S^-1(t) x with controlled growth
/// ||S(t)||, ||S^-1(t)|| <= M_upsilon * exp(upsilon t).
class KinematicTransform {
public:
  using MatFn = std::function<Matrix(double)>;

  KinematicTransform() = default;
  KinematicTransform(MatFn S, MatFn S_dot, int dim, double horizon, double M_upsilon,
                     double upsilon);

  static KinematicTransform identity(int dim, double horizon);

  Matrix S(double t) const { return s_(t); }
  Matrix S_inverse(double t) const;
  Matrix S_dot(double t) const { return s_dot_(t); }

  int dim() const { return dim_; }
  double horizon() const { return horizon_; }
  double M_upsilon() const { return m_upsilon_; }
  double upsilon() const { return upsilon_; }

  /// Grid check of the two bound inequalities and cond(S) <= 1e8.
  /// Throws with the worst offending t.
  void verify_bounds(int grid_points = 512) const;

  /// Composition x = S_outer(t) S_inner(t) z (outer applied first in the
  /// coordinate chain). Bound constants multiply, rates add.
  KinematicTransform composed_with(const KinematicTransform& inner) const;

  /// Transformed coefficients S^-1 A S - S^-1 S'.
  Matrix conjugate(const MatFn& A, double t) const;

private:
  MatFn s_, s_dot_;
  int dim_ = 0;
  double horizon_ = 0.0;
  double m_upsilon_ = 1.0;
  double upsilon_ = 0.0;
};

/// Upper triangular coefficient matrix produced by the orthogonal flow
/// (or given in closed form), with diagonal channel access.
class TriangularSystem {
public:
  using MatFn = std::function<Matrix(double)>;

  TriangularSystem() = default;
  TriangularSystem(MatFn U, int dim, double horizon, GrowthEnvelope bound);

  Matrix eval(double t) const { return u_(t); }
  int dim() const { return dim_; }
  double horizon() const { return horizon_; }
  const GrowthEnvelope& bound() const { return bound_; }

  /// Channel r of the diagonal as a scalar function of t.
  std::function<double(double)> diagonal(int r) const;
  /// Entry (r, c) as a scalar function (off-diagonal envelopes).
  std::function<double(double)> entry(int r, int c) const;

  /// Max |strictly lower entry| over the grid.
  double lower_residual(int grid_points = 512) const;

  GeneralSystem as_general() const;

private:
  MatFn u_;
  int dim_ = 0;
  double horizon_ = 0.0;
  GrowthEnvelope bound_;
};

/// Continuous QR triangularization: integrates the orthogonal-factor flow
/// Q' = Q skew(Q^T A Q), Q(0) = I, re-orthonormalizing at checkpoints.
/// S = Q is orthogonal (M_upsilon ~ 1, upsilon = 0); U = Q^T A Q - skew is
/// upper triangular by construction. Throws if orthogonality drift
/// persists above 1e-8 after re-orthonormalization.
std::pair<KinematicTransform, TriangularSystem> triangularize(const GeneralSystem& system);
std::pair<KinematicTransform, TriangularSystem> triangularize(const LinearSystem& system);

/// max over the grid of ||U(t) - (S^-1 A S - S^-1 S')(t)||.
double similarity_residual(const std::function<Matrix(double)>& A, const KinematicTransform& S,
                           const TriangularSystem& U, int grid_points = 512);

struct DiagonalSpectra {
  std::vector<SpectrumResult> channels;
  SpectrumResult full;       // spectrum of the triangular system itself
  double worst_excess = 0.0;  // how far any channel endpoint leaves `full`
};

/// Scalar spectra of every diagonal channel, with the containment check
/// union of channel spectra inside Sigma(U). Violations beyond
/// 3x tolerance are a hard failure.
DiagonalSpectra diagonal_spectra(const TriangularSystem& U, SweepPlan plan = {});

}  // namespace ned
