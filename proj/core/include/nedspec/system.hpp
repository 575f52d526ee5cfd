#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nedspec/constants.hpp"
#include "nedspec/expression.hpp"

namespace ned {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Spectral norm (largest singular value). The norm used everywhere.
double spectral_norm(const Matrix& m);

/// Growth envelope ||A(t)|| <= M * exp(mu * t).
struct GrowthEnvelope {
  double M = 1.0;   // > 0
  double mu = 0.0;  // >= 0, 1/time
};

/// Time-dependent n-by-n coefficient matrix with expression entries.
class MatrixFunction {
public:
  MatrixFunction() = default;
  MatrixFunction(int dim, std::vector<Expr> entries, GrowthEnvelope envelope);

  int dim() const { return dim_; }
  const GrowthEnvelope& envelope() const { return envelope_; }
  const Expr& entry(int r, int c) const { return entries_[static_cast<size_t>(r) * dim_ + c]; }

  Matrix eval(double t) const;

  /// Verifies finiteness of every entry and the envelope inequality on a
  /// `samples`-point grid over [0, t_max]. Throws with the offending t.
  void check_envelope(double t_max, int samples = 256) const;

private:
  int dim_ = 0;
  std::vector<Expr> entries_;
  GrowthEnvelope envelope_;
};

/// x' = A(t) x on [0, horizon].
struct LinearSystem {
  MatrixFunction A;
  double horizon = defaults::horizon;
  std::string label;

  int dim() const { return A.dim(); }
  Matrix eval(double t) const;  // throws if t outside [0, horizon]
};

/// Closed-form spectrum attached to catalog systems, for reference only.
struct ReferenceSpectrum {
  std::vector<std::pair<double, double>> intervals;
};

struct CatalogSystem {
  LinearSystem system;
  std::optional<ReferenceSpectrum> reference;
};

/// Parses the config schema: dim, horizon, entries (row-major expression
/// strings), optional envelope = {M, mu}, optional label. Unknown keys are
/// rejected. The envelope is verified on a coarse grid (or accepted as
/// declared when given explicitly, then still spot-checked).
LinearSystem parse_system(const std::string& config_text);

/// Inverse of parse_system, up to expression formatting.
std::string serialize_system(const LinearSystem& system);

/// Built-in systems: "example1" (lambda0, a), "example2" (lambda1),
/// "planar" (lambda0, a, lambda1). Parameter constraints are enforced:
/// example1 needs lambda0 < a < 0, example2 needs lambda1 != 0, planar
/// additionally lambda0 - a < -|lambda1|.
CatalogSystem builtin_example(const std::string& name,
                              const std::map<std::string, double>& parameters,
                              double horizon = defaults::horizon);

/// Indices [begin, end) of the diagonal blocks of A, detected from entries
/// that are syntactically zero. A dense matrix yields one block.
std::vector<std::pair<int, int>> detect_blocks(const MatrixFunction& A);

/// Restriction of `system` to the diagonal block [begin, end).
LinearSystem extract_block(const LinearSystem& system, int begin, int end);

/// Function-backed system: what the numerical machinery consumes. Built
/// from a LinearSystem or directly from grid/closed-form evaluators
/// (triangularized systems).
struct GeneralSystem {
  std::function<Matrix(double)> A;
  int n = 0;
  double horizon = defaults::horizon;
  std::string label;
  std::vector<std::pair<int, int>> blocks;  // empty: detect numerically

  Matrix eval(double t) const { return A(t); }
};

GeneralSystem as_general(const LinearSystem& system);

/// Diagonal blocks of a function system from off-block norms sampled on a
/// coarse grid (threshold 1e-11).
std::vector<std::pair<int, int>> detect_blocks_numeric(const GeneralSystem& system,
                                                       int samples = 64);

GeneralSystem extract_block(const GeneralSystem& system, int begin, int end);

}  // namespace ned
