#include "nedspec/dichotomy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "nedspec/envelope.hpp"

namespace ned {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Finite-time exponents of Phi(split,0) and an orthonormal basis at time 0
// whose leading columns follow the dominant right directions: reverse-order
// transposed checkpoint products with QR re-orthonormalization. Exact for
// (block-)diagonal systems, standard discrete-QR behavior otherwise.
void split_exponents(const TransitionOperator& op, double split_time, std::vector<double>& ell,
                     Matrix& v) {
  const int n = op.dim();
  std::vector<double> taus;
  taus.push_back(0.0);
  for (int k = 0; k < op.checkpoint_count(); ++k) {
    double t = op.checkpoint_time(k);
    if (t > 0 && t < split_time) taus.push_back(t);
  }
  taus.push_back(split_time);

  Matrix z = Matrix::Identity(n, n);
  ell.assign(n, 0.0);
  for (int k = static_cast<int>(taus.size()) - 2; k >= 0; --k) {
    ScaledMatrix step = op.transition_scaled(taus[k + 1], taus[k]);
    z = step.m.transpose() * z;
    Eigen::HouseholderQR<Matrix> qr(z);
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    z = qr.householderQ() * Matrix::Identity(n, n);
    for (int j = 0; j < n; ++j) {
      double d = std::fabs(r(j, j));
      ell[j] += step.log_scale + (d > 0 ? std::log(d) : -kInf);
      if (r(j, j) < 0) z.col(j) = -z.col(j);
    }
  }
  v = z;
}

struct NeutralSplit {
  int rank = 0;   // number of decaying directions
  double gap = kInf;
};

NeutralSplit neutral_split(const std::vector<double>& ell, double shift) {
  NeutralSplit out;
  double u = kInf;   // smallest non-decaying exponent
  double w = -kInf;  // largest decaying exponent
  for (double l : ell) {
    double g = l - shift;
    if (g < 0) {
      ++out.rank;
      w = std::max(w, g);
    } else {
      u = std::min(u, g);
    }
  }
  double one_sided = std::min(u, -w);  // -w = distance below neutral
  out.gap = 2.0 * one_sided;
  return out;
}

// One envelope constraint sample at lambda = 0: y = log norm of the
// projected transition, span = |t-s|, w = nonuniformity weight.
struct FitSample {
  double y;
  double span;
  double w;
};

}  // namespace

std::pair<int, Matrix> estimate_projector(const ShiftedSystem& shifted, double split_time,
                                          double gap_min) {
  if (split_time <= 0 || split_time > shifted.base->horizon()) {
    throw Error("dichotomy", "split_time outside (0, horizon]");
  }
  std::vector<double> ell;
  Matrix v;
  split_exponents(*shifted.base, split_time, ell, v);
  NeutralSplit split = neutral_split(ell, shifted.lambda * split_time);
  if (split.gap < gap_min) {
    throw Error("dichotomy", "no significant spectral gap at lambda = " +
                                 std::to_string(shifted.lambda) + " (gap " +
                                 std::to_string(split.gap) + " < " + std::to_string(gap_min) +
                                 "); lambda likely in the spectrum");
  }
  // order of `ell` is descending for generic data; pick decaying columns
  const int n = shifted.base->dim();
  Matrix basis(n, split.rank);
  int c = 0;
  for (int j = 0; j < n; ++j) {
    if (ell[j] - shifted.lambda * split_time < 0) basis.col(c++) = v.col(j);
  }
  return {split.rank, basis};
}

struct DichotomyTester::Impl {
  GeneralSystem system;
  SamplingPlan plan;
  double split_time;
  GrowthEstimate overall_growth;

  struct Block {
    int begin, end, n;
    GeneralSystem sys;
    std::unique_ptr<TransitionOperator> op;      // n >= 2
    std::unique_ptr<ScalarFlow> scalar;          // n == 1
    std::unique_ptr<ScalarPairOracle> oracle;    // n == 1
    GrowthEstimate growth;
    double eps_cap;
    std::vector<double> ell;  // exponents at split_time, lambda = 0
    Matrix v;                 // aligned basis at time 0
    // tables[r]: samples for projector rank r (forward needs r > 0,
    // backward needs r < n); matrix blocks only
    std::vector<std::vector<FitSample>> forward;
    std::vector<std::vector<FitSample>> backward;
  };
  std::vector<Block> blocks;

  double block_log_norm(const Block& b, double t, double s) const {
    if (b.scalar) return b.scalar->log_transition(t, s);
    return b.op->log_norm_transition(t, s);
  }

  // Orthonormal frames spanning Phi(tau,0) * (selected columns of v),
  // propagated hop by hop with QR re-orthonormalization.
  std::vector<Matrix> propagate_frames(const Block& b, const std::vector<double>& times,
                                       const Matrix& start) const {
    std::vector<Matrix> frames;
    frames.reserve(times.size());
    Matrix f = Eigen::HouseholderQR<Matrix>(start).householderQ() *
               Matrix::Identity(b.n, static_cast<int>(start.cols()));
    double prev = 0.0;
    for (double t : times) {
      if (t > prev) {
        ScaledMatrix phi = b.op->transition_scaled(t, prev);
        Matrix z = phi.m * f;
        f = Eigen::HouseholderQR<Matrix>(z).householderQ() *
            Matrix::Identity(b.n, static_cast<int>(start.cols()));
        prev = t;
      }
      frames.push_back(f);
    }
    return frames;
  }

  void build_block_tables(Block& b, const std::vector<std::pair<double, double>>& pairs) {
    b.forward.assign(b.n + 1, {});
    b.backward.assign(b.n + 1, {});
    if (b.n == 1) return;  // scalar blocks go through the pair oracle

    std::vector<double> times;
    times.reserve(2 * pairs.size());
    for (auto [t, s] : pairs) {
      times.push_back(t);
      times.push_back(s);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    auto index_of = [&times](double t) {
      return static_cast<size_t>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
    };

    for (int r = 0; r <= b.n; ++r) {
      // decaying directions are the trailing columns (exponents descending)
      Matrix stable0(b.n, r), unstable0(b.n, b.n - r);
      {
        std::vector<int> order(b.n);
        for (int j = 0; j < b.n; ++j) order[j] = j;
        std::stable_sort(order.begin(), order.end(),
                         [&](int i, int j) { return b.ell[i] > b.ell[j]; });
        for (int j = 0; j < b.n - r; ++j) unstable0.col(j) = b.v.col(order[j]);
        for (int j = 0; j < r; ++j) stable0.col(j) = b.v.col(order[b.n - r + j]);
      }
      std::vector<Matrix> w_frames, u_frames;
      if (r > 0) w_frames = propagate_frames(b, times, stable0);
      if (r < b.n) u_frames = propagate_frames(b, times, unstable0);

      for (auto [t, s] : pairs) {
        size_t si = index_of(s);
        Matrix x(b.n, b.n);
        if (r > 0) x.leftCols(r) = w_frames[si];
        if (r < b.n) x.rightCols(b.n - r) = u_frames[si];
        Eigen::FullPivLU<Matrix> lu(x);
        if (!lu.isInvertible()) continue;
        Matrix xinv = lu.inverse();
        if (t >= s && r > 0) {
          ScaledMatrix z = b.op->apply_scaled(t, s, w_frames[si]);
          double y = z.log_scale + std::log(spectral_norm(z.m * xinv.topRows(r)));
          if (std::isfinite(y)) b.forward[r].push_back({y, t - s, s});
        }
        if (t <= s && r < b.n) {
          ScaledMatrix z = b.op->apply_scaled(t, s, u_frames[si]);
          double y = z.log_scale + std::log(spectral_norm(z.m * xinv.bottomRows(b.n - r)));
          if (std::isfinite(y)) b.backward[r].push_back({y, s - t, t});
        }
      }
    }
  }

  // Envelope feasibility of one block at a shift, for its own rank there.
  struct BlockFit {
    bool admits = false;
    bool overflow = false;
    double alpha = 0.0, eps = 0.0, lnK = 0.0;
  };

  std::vector<EnvLine> block_lines(const Block& b, int rank, double lambda) const {
    std::vector<EnvLine> lines;
    lines.reserve(b.forward[rank].size() + b.backward[rank].size());
    for (const auto& smp : b.forward[rank]) {
      lines.push_back({smp.y - lambda * smp.span, smp.span, -smp.w});
    }
    for (const auto& smp : b.backward[rank]) {
      lines.push_back({smp.y + lambda * smp.span, smp.span, -smp.w});
    }
    return lines;
  }

  BlockFit fit_block(const Block& b, int rank, double lambda) const {
    if (b.n == 1) return fit_scalar_block(b, rank, lambda);
    BlockFit out;
    std::vector<EnvLine> lines = block_lines(b, rank, lambda);
    if (lines.empty()) {  // zero-dimensional family: trivially admits
      out.admits = true;
      out.alpha = kInf;
      return out;
    }
    for (const auto& l : lines) {
      if (l.y > defaults::overflow_log_norm) {
        out.overflow = true;
        return out;
      }
    }
    const double cap = b.eps_cap;
    auto ln_k_at = [&](double alpha) { return envelope_min_over_e(lines, alpha, 0.0, cap); };
    if (ln_k_at(plan.alpha_min) > plan.ln_K_max) return out;  // not admits
    out.admits = true;
    double alpha_hi = b.growth.a + std::fabs(lambda) + cap + 5.0;
    double lo = plan.alpha_min, hi = alpha_hi;
    if (ln_k_at(alpha_hi) <= plan.ln_K_max) {
      lo = alpha_hi;
    } else {
      for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        if (ln_k_at(mid) <= plan.ln_K_max) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
    }
    out.alpha = lo;
    out.eps = envelope_min_feasible_e(lines, out.alpha, 0.0, cap, plan.ln_K_max);
    out.lnK = envelope_value(lines, out.alpha, out.eps);
    return out;
  }

  // Scalar channel fit through the exact pair oracle. rank 1 claims decay
  // forward; rank 0 claims growth forward (decay backward).
  BlockFit fit_scalar_block(const Block& b, int rank, double lambda) const {
    BlockFit out;
    const ScalarPairOracle& oracle = *b.oracle;
    auto required_ln_k = [&](double alpha, double eps) {
      if (rank == 1) return oracle.max_forward(-lambda + alpha, -lambda + alpha + eps);
      return oracle.max_backward(-lambda - alpha - eps, -lambda - alpha);
    };
    double raw = rank == 1 ? oracle.max_forward(-lambda, -lambda)
                           : oracle.max_backward(-lambda, -lambda);
    if (raw > defaults::overflow_log_norm) {
      out.overflow = true;
      return out;
    }
    const double cap = b.eps_cap;
    auto ln_k_at = [&](double alpha) {
      return minimize_convex([&](double e) { return required_ln_k(alpha, e); }, 0.0, cap);
    };
    if (ln_k_at(plan.alpha_min) > plan.ln_K_max) return out;
    out.admits = true;
    // keep the explored tilts inside the oracle's coverage
    double alpha_hi = std::max(plan.alpha_min,
                               std::min(b.growth.a + std::fabs(lambda) + cap + 5.0,
                                        oracle.tilt_limit() - std::fabs(lambda) - cap - 0.5));
    double lo = plan.alpha_min, hi = alpha_hi;
    if (ln_k_at(alpha_hi) <= plan.ln_K_max) {
      lo = alpha_hi;
    } else {
      for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        if (ln_k_at(mid) <= plan.ln_K_max) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
    }
    out.alpha = lo;
    {
      double elo = 0.0, ehi = cap;
      if (required_ln_k(out.alpha, elo) <= plan.ln_K_max) {
        out.eps = 0.0;
      } else {
        double e_min;
        minimize_convex([&](double e) { return required_ln_k(out.alpha, e); }, 0.0, cap, &e_min);
        ehi = e_min;
        for (int i = 0; i < 70; ++i) {
          double mid = 0.5 * (elo + ehi);
          if (required_ln_k(out.alpha, mid) <= plan.ln_K_max) {
            ehi = mid;
          } else {
            elo = mid;
          }
        }
        out.eps = ehi;
      }
    }
    out.lnK = std::max(0.0, required_ln_k(out.alpha, out.eps));
    return out;
  }

  // Worst fitted-envelope slack of a block on fresh sample pairs.
  double revalidate_block(const Block& b, int rank, double lambda, const BlockFit& fit,
                          const std::vector<std::pair<double, double>>& fresh) const {
    double slack = kInf;
    if (b.n != 1) return slack;  // matrix blocks are covered by the cached tables
    for (auto [t, s] : fresh) {
      double y = b.scalar->log_transition(t, s) - lambda * (t - s);
      if (t >= s && rank > 0) {
        slack = std::min(slack, fit.lnK - (y + fit.alpha * (t - s) - fit.eps * s));
      }
      if (t <= s && rank < 1) {
        slack = std::min(slack, fit.lnK - (y + fit.alpha * (s - t) - fit.eps * t));
      }
    }
    return slack;
  }
};

DichotomyTester::DichotomyTester(const GeneralSystem& system, SamplingPlan plan)
    : impl_(std::make_unique<Impl>()) {
  impl_->system = system;
  impl_->plan = plan;
  impl_->split_time = plan.split_time > 0
                          ? std::min(plan.split_time, system.horizon)
                          : std::min(system.horizon, 40.0 / plan.alpha_min);

  auto pairs = make_sample_pairs(system.horizon, plan.pair_count, plan.seed);
  auto block_spans = system.blocks.empty() ? detect_blocks_numeric(system) : system.blocks;

  for (auto [begin, end] : block_spans) {
    Impl::Block b;
    b.begin = begin;
    b.end = end;
    b.n = end - begin;
    b.sys = extract_block(system, begin, end);
    if (b.n == 1) {
      b.scalar = std::make_unique<ScalarFlow>(b.sys);
      // coarse fit sizes the oracle's tilt coverage; the final fit is exact
      std::vector<std::array<double, 3>> samples;
      samples.reserve(pairs.size());
      for (auto [t, s] : pairs) samples.push_back({t, s, b.scalar->log_transition(t, s)});
      GrowthEstimate coarse = fit_growth_from_samples(samples);
      double c_max = 3.0 * (coarse.a + coarse.eps_bar + 2.0);
      b.oracle = std::make_unique<ScalarPairOracle>(*b.scalar, c_max);
      b.growth = fit_growth_scalar(*b.oracle);
      b.ell = {b.scalar->cumulative(impl_->split_time)};
      b.v = Matrix::Identity(1, 1);
    } else {
      b.op = std::make_unique<TransitionOperator>(b.sys);
      std::vector<std::array<double, 3>> samples;
      samples.reserve(pairs.size());
      for (auto [t, s] : pairs) samples.push_back({t, s, b.op->log_norm_transition(t, s)});
      b.growth = fit_growth_from_samples(samples);
      split_exponents(*b.op, impl_->split_time, b.ell, b.v);
    }
    b.eps_cap = plan.eps_max >= 0 ? plan.eps_max : b.growth.eps_bar + defaults::eps_margin;
    impl_->build_block_tables(b, pairs);
    impl_->blocks.push_back(std::move(b));
  }

  // overall growth envelope: the block-diagonal norm is the max over
  // blocks, so combining per-block constants majorizes it
  GrowthEstimate overall;
  for (const auto& b : impl_->blocks) {
    overall.a = std::max(overall.a, b.growth.a);
    overall.eps_bar = std::max(overall.eps_bar, b.growth.eps_bar);
    overall.K0 = std::max(overall.K0, b.growth.K0);
  }
  impl_->overall_growth = overall;
}

DichotomyTester::~DichotomyTester() = default;
DichotomyTester::DichotomyTester(DichotomyTester&&) noexcept = default;

const GrowthEstimate& DichotomyTester::growth() const { return impl_->overall_growth; }
const SamplingPlan& DichotomyTester::plan() const { return impl_->plan; }
const GeneralSystem& DichotomyTester::general() const { return impl_->system; }
int DichotomyTester::dim() const { return impl_->system.n; }
double DichotomyTester::horizon() const { return impl_->system.horizon; }
int DichotomyTester::block_count() const { return static_cast<int>(impl_->blocks.size()); }

std::optional<int> DichotomyTester::rank_at(double lambda) const {
  int rank = 0;
  for (const auto& b : impl_->blocks) {
    NeutralSplit split = neutral_split(b.ell, lambda * impl_->split_time);
    if (split.gap < impl_->plan.gap_min) return std::nullopt;
    rank += split.rank;
  }
  return rank;
}

DichotomyVerdict DichotomyTester::test(double lambda) const {
  const auto& impl = *impl_;
  DichotomyVerdict v;
  v.lambda = lambda;

  int n = impl.system.n;
  std::vector<int> block_rank(impl.blocks.size(), 0);
  bool gap_fail = false;
  int total_rank = 0;
  for (size_t i = 0; i < impl.blocks.size(); ++i) {
    NeutralSplit split = neutral_split(impl.blocks[i].ell, lambda * impl.split_time);
    block_rank[i] = split.rank;
    total_rank += split.rank;
    if (split.gap < impl.plan.gap_min) gap_fail = true;
  }
  v.projector_rank = total_rank;
  v.gap_fail = gap_fail;

  // stable basis, embedded block by block
  v.stable_basis = Matrix::Zero(n, total_rank);
  {
    int col = 0;
    for (size_t i = 0; i < impl.blocks.size(); ++i) {
      const auto& b = impl.blocks[i];
      std::vector<int> order(b.n);
      for (int j = 0; j < b.n; ++j) order[j] = j;
      std::stable_sort(order.begin(), order.end(),
                       [&](int p, int q) { return b.ell[p] > b.ell[q]; });
      for (int j = b.n - block_rank[i]; j < b.n; ++j) {
        v.stable_basis.block(b.begin, col, b.n, 1) = b.v.col(order[j]);
        ++col;
      }
    }
  }

  double alpha = kInf, eps = 0.0, lnK = -kInf, cap = 0.0;
  bool admits = !gap_fail;
  for (size_t i = 0; i < impl.blocks.size(); ++i) {
    auto fit = impl.fit_block(impl.blocks[i], block_rank[i], lambda);
    if (fit.overflow) v.overflow = true;
    if (!fit.admits) {
      admits = false;
      continue;
    }
    alpha = std::min(alpha, fit.alpha);
    eps = std::max(eps, fit.eps);
    lnK = std::max(lnK, fit.lnK);
    cap = std::max(cap, impl.blocks[i].eps_cap);
  }
  v.eps_cap = cap;

  if (admits) {
    // fresh-sample validation of the fitted constants (scalar blocks)
    auto fresh = make_sample_pairs(impl.system.horizon, 2 * impl.plan.pair_count,
                                   impl.plan.seed + 1, defaults::lattice_side / 2);
    for (size_t i = 0; i < impl.blocks.size(); ++i) {
      auto fit = impl.fit_block(impl.blocks[i], block_rank[i], lambda);
      double slack = impl.revalidate_block(impl.blocks[i], block_rank[i], lambda, fit, fresh);
      if (slack < -0.2) {
        // refit over the union by inflating the constant to cover fresh pairs
        lnK = std::max(lnK, fit.lnK - slack);
        if (lnK > impl.plan.ln_K_max) admits = false;
      }
    }
  }

  v.admits = admits;
  if (admits) {
    v.alpha = std::isfinite(alpha) ? alpha : impl.plan.alpha_min;
    v.eps = eps;
    v.K = std::exp(std::max(0.0, lnK));
    v.margin = impl.plan.ln_K_max - lnK;
    v.eps_ge_alpha = v.eps >= v.alpha;
  }
  return v;
}

DichotomyVerdict test_dichotomy(const LinearSystem& system, double lambda, SamplingPlan plan) {
  DichotomyTester tester(system, plan);
  return tester.test(lambda);
}

}  // namespace ned
