#include "nedspec/triangular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "nedspec/flow.hpp"

namespace ned {

KinematicTransform::KinematicTransform(MatFn S, MatFn S_dot, int dim, double horizon,
                                       double M_upsilon, double upsilon)
    : s_(std::move(S)), s_dot_(std::move(S_dot)), dim_(dim), horizon_(horizon),
      m_upsilon_(M_upsilon), upsilon_(upsilon) {}

KinematicTransform KinematicTransform::identity(int dim, double horizon) {
  return KinematicTransform([dim](double) { return Matrix::Identity(dim, dim); },
                            [dim](double) { return Matrix::Zero(dim, dim); }, dim, horizon, 1.0,
                            0.0);
}

Matrix KinematicTransform::S_inverse(double t) const {
  Matrix s = s_(t);
  Eigen::FullPivLU<Matrix> lu(s);
  if (!lu.isInvertible()) {
    throw Error("triangular", "singular transform at t = " + std::to_string(t));
  }
  return lu.inverse();
}

void KinematicTransform::verify_bounds(int grid_points) const {
  for (int i = 0; i <= grid_points; ++i) {
    double t = horizon_ * i / grid_points;
    Matrix s = s_(t);
    auto svd = s.jacobiSvd();
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(dim_ - 1);
    if (smin <= 0 || smax / smin > 1e8) {
      throw Error("triangular", "transform condition number above 1e8 at t = " + std::to_string(t));
    }
    double budget = m_upsilon_ * std::exp(upsilon_ * t);
    if (smax > budget * (1 + 1e-9) || 1.0 / smin > budget * (1 + 1e-9)) {
      throw Error("triangular", "transform bound violated at t = " + std::to_string(t));
    }
  }
}

KinematicTransform KinematicTransform::composed_with(const KinematicTransform& inner) const {
  if (inner.dim_ != dim_) throw Error("triangular", "composing transforms of unequal dimension");
  auto so = s_, sdo = s_dot_, si = inner.s_, sdi = inner.s_dot_;
  return KinematicTransform(
      [so, si](double t) { return so(t) * si(t); },
      [so, sdo, si, sdi](double t) { return sdo(t) * si(t) + so(t) * sdi(t); }, dim_, horizon_,
      m_upsilon_ * inner.m_upsilon_, upsilon_ + inner.upsilon_);
}

Matrix KinematicTransform::conjugate(const MatFn& A, double t) const {
  Matrix s = s_(t);
  Eigen::FullPivLU<Matrix> lu(s);
  if (!lu.isInvertible()) {
    throw Error("triangular", "singular transform at t = " + std::to_string(t));
  }
  return lu.solve(A(t) * s - s_dot_(t));
}

TriangularSystem::TriangularSystem(MatFn U, int dim, double horizon, GrowthEnvelope bound)
    : u_(std::move(U)), dim_(dim), horizon_(horizon), bound_(bound) {}

std::function<double(double)> TriangularSystem::diagonal(int r) const {
  auto u = u_;
  return [u, r](double t) { return u(t)(r, r); };
}

std::function<double(double)> TriangularSystem::entry(int r, int c) const {
  auto u = u_;
  return [u, r, c](double t) { return u(t)(r, c); };
}

double TriangularSystem::lower_residual(int grid_points) const {
  double worst = 0.0;
  for (int i = 0; i <= grid_points; ++i) {
    double t = horizon_ * i / grid_points;
    Matrix u = u_(t);
    for (int r = 1; r < dim_; ++r)
      for (int c = 0; c < r; ++c) worst = std::max(worst, std::fabs(u(r, c)));
  }
  return worst;
}

GeneralSystem TriangularSystem::as_general() const {
  GeneralSystem out;
  out.A = u_;
  out.n = dim_;
  out.horizon = horizon_;
  out.label = "triangularized";
  return out;
}

namespace {

// strictly-lower skew part: L - L^T with L the strictly lower triangle
Matrix skew_lower(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  Matrix out = Matrix::Zero(n, n);
  for (int r = 1; r < n; ++r) {
    for (int c = 0; c < r; ++c) {
      out(r, c) = m(r, c);
      out(c, r) = -m(r, c);
    }
  }
  return out;
}

// Orthogonal factor flow stored on a fine grid; queries re-integrate from
// the nearest stored point, so there is no interpolation error.
class OrthogonalFlow {
public:
  OrthogonalFlow(GeneralSystem system, double store_dt = 0.05, double reorth_dt = 0.5)
      : system_(std::move(system)) {
    const int n = system_.n;
    const int steps = std::max(1, static_cast<int>(std::ceil(system_.horizon / store_dt)));
    dt_ = system_.horizon / steps;
    q_.reserve(steps + 1);
    q_.push_back(Matrix::Identity(n, n));
    double drift_worst = 0.0;
    int since_reorth = 0;
    const int reorth_every = std::max(1, static_cast<int>(std::round(reorth_dt / dt_)));
    for (int k = 0; k < steps; ++k) {
      Matrix q = integrate_q(q_.back(), k * dt_, (k + 1) * dt_);
      if (++since_reorth >= reorth_every) {
        double drift = (q.transpose() * q - Matrix::Identity(n, n)).norm();
        drift_worst = std::max(drift_worst, drift);
        Eigen::HouseholderQR<Matrix> qr(q);
        Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
        q = qr.householderQ() * Matrix::Identity(n, n);
        for (int j = 0; j < n; ++j)
          if (r(j, j) < 0) q.col(j) = -q.col(j);
        since_reorth = 0;
      }
      q_.push_back(std::move(q));
    }
    if (drift_worst > 1e-8) {
      throw Error("triangular",
                  "orthogonality drift " + std::to_string(drift_worst) + " persists above 1e-8");
    }
  }

  Matrix q_at(double t) const {
    int k = std::clamp(static_cast<int>(std::round(t / dt_)), 0, static_cast<int>(q_.size()) - 1);
    double base = k * dt_;
    if (t == base) return q_[k];
    return integrate_q(q_[k], base, t);
  }

  const GeneralSystem& system() const { return system_; }

private:
  Matrix integrate_q(const Matrix& q0, double t0, double t1) const {
    return integrate_ode(
        [this](double t, const Matrix& q) -> Matrix {
          return q * skew_lower(q.transpose() * system_.A(t) * q);
        },
        q0, t0, t1, defaults::integ_abs_tol, defaults::integ_rel_tol);
  }

  GeneralSystem system_;
  double dt_;
  std::vector<Matrix> q_;
};

GrowthEnvelope fit_norm_envelope(const std::function<Matrix(double)>& f, double horizon) {
  const int samples = 256;
  double m0 = 1e-12;
  std::vector<double> norms(samples + 1), times(samples + 1);
  for (int i = 0; i <= samples; ++i) {
    times[i] = horizon * i / samples;
    norms[i] = spectral_norm(f(times[i]));
  }
  for (double mu : {0.0, 0.01, 0.05, 0.1, 0.5}) {
    double m = m0;
    for (int i = 0; i <= samples; ++i) m = std::max(m, norms[i] / std::exp(mu * times[i]));
    if (m < 1e6) return {m * 1.1, mu};
  }
  throw Error("triangular", "triangular coefficients grow too fast for an envelope");
}

}  // namespace

std::pair<KinematicTransform, TriangularSystem> triangularize(const GeneralSystem& system) {
  const int n = system.n;
  if (n == 1) {
    auto transform = KinematicTransform::identity(1, system.horizon);
    TriangularSystem tri(system.A, 1, system.horizon, fit_norm_envelope(system.A, system.horizon));
    return {std::move(transform), std::move(tri)};
  }

  auto flow = std::make_shared<OrthogonalFlow>(system);
  auto a_fn = system.A;

  auto s_fn = [flow](double t) { return flow->q_at(t); };
  auto s_dot_fn = [flow, a_fn](double t) {
    Matrix q = flow->q_at(t);
    return Matrix(q * skew_lower(q.transpose() * a_fn(t) * q));
  };
  auto u_fn = [flow, a_fn](double t) {
    Matrix q = flow->q_at(t);
    Matrix m = q.transpose() * a_fn(t) * q;
    return Matrix(m - skew_lower(m));
  };

  // orthogonal factor: unit bound with a small drift allowance
  KinematicTransform transform(s_fn, s_dot_fn, n, system.horizon, 1.0 + 1e-7, 0.0);
  TriangularSystem tri(u_fn, n, system.horizon, fit_norm_envelope(u_fn, system.horizon));
  return {std::move(transform), std::move(tri)};
}

std::pair<KinematicTransform, TriangularSystem> triangularize(const LinearSystem& system) {
  return triangularize(as_general(system));
}

double similarity_residual(const std::function<Matrix(double)>& A, const KinematicTransform& S,
                           const TriangularSystem& U, int grid_points) {
  double worst = 0.0;
  for (int i = 0; i <= grid_points; ++i) {
    double t = U.horizon() * i / grid_points;
    worst = std::max(worst, spectral_norm(U.eval(t) - S.conjugate(A, t)));
  }
  return worst;
}

DiagonalSpectra diagonal_spectra(const TriangularSystem& U, SweepPlan plan) {
  DiagonalSpectra out;
  for (int r = 0; r < U.dim(); ++r) {
    GeneralSystem chan;
    auto d = U.diagonal(r);
    chan.A = [d](double t) {
      Matrix m(1, 1);
      m(0, 0) = d(t);
      return m;
    };
    chan.n = 1;
    chan.horizon = U.horizon();
    chan.label = "diagonal channel " + std::to_string(r);
    out.channels.push_back(compute_spectrum(chan, plan));
  }
  out.full = compute_spectrum(U.as_general(), plan);

  // containment of every channel interval in the full spectrum
  double worst = 0.0;
  for (const auto& chan : out.channels) {
    for (const auto& iv : chan.intervals) {
      double excess = std::numeric_limits<double>::infinity();
      for (const auto& host : out.full.intervals) {
        double e = std::max({0.0, host.lo - iv.lo, iv.hi - host.hi});
        excess = std::min(excess, e);
      }
      worst = std::max(worst, excess);
    }
  }
  out.worst_excess = worst;
  if (worst > 3 * plan.endpoint_tol) {
    throw Error("triangular", "diagonal spectrum leaves the triangular spectrum by " +
                                  std::to_string(worst) + " (3x tolerance exceeded)");
  }
  return out;
}

}  // namespace ned
