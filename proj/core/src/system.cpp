#include "nedspec/system.hpp"

#include <cmath>
#include <sstream>

#include "nedspec/config.hpp"

namespace ned {

double spectral_norm(const Matrix& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::fabs(m(0, 0));
  return m.jacobiSvd().singularValues()(0);
}

MatrixFunction::MatrixFunction(int dim, std::vector<Expr> entries, GrowthEnvelope envelope)
    : dim_(dim), entries_(std::move(entries)), envelope_(envelope) {
  if (dim_ <= 0) throw Error("system", "dimension must be positive");
  if (entries_.size() != static_cast<size_t>(dim_) * dim_) {
    throw Error("system", "expected " + std::to_string(dim_ * dim_) + " entries, got " +
                              std::to_string(entries_.size()));
  }
  if (envelope_.M <= 0 || envelope_.mu < 0) {
    throw Error("system", "envelope needs M > 0 and mu >= 0");
  }
}

Matrix MatrixFunction::eval(double t) const {
  Matrix out(dim_, dim_);
  for (int r = 0; r < dim_; ++r)
    for (int c = 0; c < dim_; ++c) out(r, c) = entry(r, c).eval(t);
  return out;
}

void MatrixFunction::check_envelope(double t_max, int samples) const {
  for (int i = 0; i <= samples; ++i) {
    double t = t_max * i / samples;
    Matrix a(dim_, dim_);
    for (int r = 0; r < dim_; ++r) {
      for (int c = 0; c < dim_; ++c) {
        double v = entry(r, c).eval(t);
        if (!std::isfinite(v)) {
          throw Error("system", "entry (" + std::to_string(r) + "," + std::to_string(c) +
                                    ") is not finite at t = " + std::to_string(t));
        }
        a(r, c) = v;
      }
    }
    double norm = spectral_norm(a);
    double bound = envelope_.M * std::exp(envelope_.mu * t);
    if (norm > bound * (1 + 1e-12)) {
      std::ostringstream os;
      os << "envelope violated at t = " << t << ": ||A(t)|| = " << norm << " > " << bound;
      throw Error("system", os.str());
    }
  }
}

Matrix LinearSystem::eval(double t) const {
  if (t < 0 || t > horizon) {
    throw Error("system", "t = " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + "]");
  }
  return A.eval(t);
}

namespace {

GrowthEnvelope fit_coarse_envelope(int dim, const std::vector<Expr>& entries, double horizon) {
  // Smallest mu in {0, 0.01, ...} such that some M covers a coarse grid,
  // then M from the worst sample with 10% headroom.
  const int samples = 256;
  std::vector<double> norms(samples + 1);
  std::vector<double> times(samples + 1);
  for (int i = 0; i <= samples; ++i) {
    double t = horizon * i / samples;
    Matrix a(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) {
        double v = entries[static_cast<size_t>(r) * dim + c].eval(t);
        if (!std::isfinite(v)) {
          throw Error("system", "entry (" + std::to_string(r) + "," + std::to_string(c) +
                                    ") is not finite at t = " + std::to_string(t));
        }
        a(r, c) = v;
      }
    norms[i] = spectral_norm(a);
    times[i] = t;
  }
  for (double mu : {0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5}) {
    double M = 1.0;
    for (int i = 0; i <= samples; ++i) M = std::max(M, norms[i] / std::exp(mu * times[i]));
    if (M < 1e6) return {M * 1.1, mu};
  }
  throw Error("system", "could not fit a growth envelope; coefficients grow too fast");
}

}  // namespace

LinearSystem parse_system(const std::string& config_text) {
  auto table = parse_config(config_text);
  for (const auto& [key, _] : table) {
    if (key != "dim" && key != "horizon" && key != "entries" && key != "envelope" && key != "label") {
      throw Error("config", "unknown key '" + key + "'");
    }
  }
  if (!table.count("dim")) throw Error("config", "missing 'dim'");
  if (!table.count("entries")) throw Error("config", "missing 'entries'");

  double dim_raw = table.at("dim").number("dim");
  int dim = static_cast<int>(dim_raw);
  if (dim <= 0 || dim != dim_raw) throw Error("config", "'dim' must be a positive integer");

  double horizon = defaults::horizon;
  if (table.count("horizon")) horizon = table.at("horizon").number("horizon");
  if (horizon <= 0) throw Error("config", "'horizon' must be positive");

  const auto& list = table.at("entries").list("entries");
  if (list.size() != static_cast<size_t>(dim) * dim) {
    throw Error("config", "dimension mismatch: dim = " + std::to_string(dim) + " needs " +
                              std::to_string(dim * dim) + " entries, got " + std::to_string(list.size()));
  }
  std::vector<Expr> entries;
  entries.reserve(list.size());
  for (const auto& item : list) entries.push_back(Expr::parse(item.string("entries[]")));

  GrowthEnvelope env;
  if (table.count("envelope")) {
    const auto& t = table.at("envelope").table("envelope");
    for (const auto& [key, _] : t) {
      if (key != "M" && key != "mu") throw Error("config", "unknown envelope key '" + key + "'");
    }
    if (!t.count("M") || !t.count("mu")) throw Error("config", "envelope needs M and mu");
    env.M = t.at("M").number("M");
    env.mu = t.at("mu").number("mu");
  } else {
    env = fit_coarse_envelope(dim, entries, horizon);
  }

  LinearSystem sys;
  sys.A = MatrixFunction(dim, std::move(entries), env);
  sys.horizon = horizon;
  if (table.count("label")) sys.label = table.at("label").string("label");
  sys.A.check_envelope(horizon);
  return sys;
}

std::string serialize_system(const LinearSystem& system) {
  std::ostringstream os;
  os.precision(17);
  os << "dim = " << system.dim() << "\n";
  os << "horizon = " << system.horizon << "\n";
  if (!system.label.empty()) os << "label = \"" << system.label << "\"\n";
  os << "entries = [";
  for (int r = 0; r < system.dim(); ++r) {
    for (int c = 0; c < system.dim(); ++c) {
      if (r || c) os << ", ";
      os << '"' << system.A.entry(r, c).str() << '"';
    }
  }
  os << "]\n";
  os << "envelope = { M = " << system.A.envelope().M << ", mu = " << system.A.envelope().mu << " }\n";
  return os.str();
}

namespace {

double param(const std::map<std::string, double>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw Error("catalog", "missing parameter '" + name + "'");
  return it->second;
}

// M covering all grid samples at the given rate, with headroom
double fit_envelope_constant(const std::vector<Expr>& entries, int dim, double horizon,
                             double mu) {
  double m = 1.0;
  const int samples = 2048;
  for (int i = 0; i <= samples; ++i) {
    double t = horizon * i / samples;
    Matrix a(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) a(r, c) = entries[static_cast<size_t>(r) * dim + c].eval(t);
    m = std::max(m, spectral_norm(a) / std::exp(mu * t));
  }
  return 1.1 * m;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  if (v < 0) {
    os << "(" << v << ")";
  } else {
    os << v;
  }
  return os.str();
}

Expr example1_entry(double lambda0, double a) {
  return Expr::parse(num(lambda0) + " + " + num(a) + "*t*sin(t)");
}

Expr example2_entry(double lambda1) {
  return Expr::parse(num(lambda1) + "*(sin(ln(t+1)) + cos(ln(t+1)))");
}

void check_example1_params(double lambda0, double a) {
  if (!(a < 0)) throw Error("catalog", "example1 needs a < 0");
  if (!(lambda0 < a)) throw Error("catalog", "example1 needs lambda0 < a");
}

}  // namespace

CatalogSystem builtin_example(const std::string& name,
                              const std::map<std::string, double>& parameters,
                              double horizon) {
  CatalogSystem out;
  if (name == "example1") {
    double lambda0 = param(parameters, "lambda0");
    double a = param(parameters, "a");
    check_example1_params(lambda0, a);
    // |A(t)| <= |lambda0| + |a| t grows linearly; a small mu covers it
    std::vector<Expr> entries{example1_entry(lambda0, a)};
    GrowthEnvelope env{fit_envelope_constant(entries, 1, horizon, 0.04), 0.04};
    out.system.A = MatrixFunction(1, std::move(entries), env);
    out.system.horizon = horizon;
    out.system.label = "example1";
    out.reference = ReferenceSpectrum{{{lambda0 + a, lambda0 - a}}};
  } else if (name == "example2") {
    double lambda1 = param(parameters, "lambda1");
    if (lambda1 == 0) throw Error("catalog", "example2 needs lambda1 != 0");
    GrowthEnvelope env{std::sqrt(2.0) * std::fabs(lambda1) + 0.1, 0.0};
    out.system.A = MatrixFunction(1, {example2_entry(lambda1)}, env);
    out.system.horizon = horizon;
    out.system.label = "example2";
    out.reference = ReferenceSpectrum{{{-std::fabs(lambda1), std::fabs(lambda1)}}};
  } else if (name == "planar") {
    double lambda0 = param(parameters, "lambda0");
    double a = param(parameters, "a");
    double lambda1 = param(parameters, "lambda1");
    check_example1_params(lambda0, a);
    if (lambda1 == 0) throw Error("catalog", "planar needs lambda1 != 0");
    if (!(lambda0 - a < -std::fabs(lambda1))) {
      throw Error("catalog", "planar needs lambda0 - a < -|lambda1|");
    }
    std::vector<Expr> entries{example1_entry(lambda0, a), Expr::constant(0.0),
                              Expr::constant(0.0), example2_entry(lambda1)};
    GrowthEnvelope env{fit_envelope_constant(entries, 2, horizon, 0.04), 0.04};
    out.system.A = MatrixFunction(2, std::move(entries), env);
    out.system.horizon = horizon;
    out.system.label = "planar";
    out.reference = ReferenceSpectrum{
        {{lambda0 + a, lambda0 - a}, {-std::fabs(lambda1), std::fabs(lambda1)}}};
  } else {
    throw Error("catalog", "unknown example '" + name + "'");
  }
  out.system.A.check_envelope(horizon);
  return out;
}

std::vector<std::pair<int, int>> detect_blocks(const MatrixFunction& A) {
  const int n = A.dim();
  std::vector<std::pair<int, int>> blocks;
  int begin = 0;
  while (begin < n) {
    int end = begin + 1;
    // grow the block until no nonzero entry couples [begin,end) to the rest
    bool changed = true;
    while (changed && end < n) {
      changed = false;
      for (int r = begin; r < end && !changed; ++r) {
        for (int c = end; c < n && !changed; ++c) {
          if (!A.entry(r, c).is_zero() || !A.entry(c, r).is_zero()) {
            ++end;
            changed = true;
          }
        }
      }
    }
    blocks.emplace_back(begin, end);
    begin = end;
  }
  return blocks;
}

LinearSystem extract_block(const LinearSystem& system, int begin, int end) {
  const int n = end - begin;
  std::vector<Expr> entries;
  entries.reserve(static_cast<size_t>(n) * n);
  for (int r = begin; r < end; ++r)
    for (int c = begin; c < end; ++c) entries.push_back(system.A.entry(r, c));
  LinearSystem out;
  out.A = MatrixFunction(n, std::move(entries), system.A.envelope());
  out.horizon = system.horizon;
  out.label = system.label + "[" + std::to_string(begin) + ":" + std::to_string(end) + "]";
  return out;
}

GeneralSystem as_general(const LinearSystem& system) {
  GeneralSystem out;
  // MatrixFunction copies are cheap (shared expression nodes); capturing by
  // value keeps the evaluator free of lifetime ties to `system`.
  out.A = [mf = system.A](double t) { return mf.eval(t); };
  out.n = system.dim();
  out.horizon = system.horizon;
  out.label = system.label;
  out.blocks = detect_blocks(system.A);
  return out;
}

std::vector<std::pair<int, int>> detect_blocks_numeric(const GeneralSystem& system, int samples) {
  const int n = system.n;
  // coupled(r, c): some sample has a nonzero entry linking r and c
  std::vector<std::vector<bool>> coupled(n, std::vector<bool>(n, false));
  for (int i = 0; i <= samples; ++i) {
    double t = system.horizon * i / samples;
    Matrix a = system.A(t);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (std::fabs(a(r, c)) > 1e-11) coupled[r][c] = true;
  }
  std::vector<std::pair<int, int>> blocks;
  int begin = 0;
  while (begin < n) {
    int end = begin + 1;
    bool changed = true;
    while (changed && end < n) {
      changed = false;
      for (int r = begin; r < end && !changed; ++r) {
        for (int c = end; c < n && !changed; ++c) {
          if (coupled[r][c] || coupled[c][r]) {
            ++end;
            changed = true;
          }
        }
      }
    }
    blocks.emplace_back(begin, end);
    begin = end;
  }
  return blocks;
}

GeneralSystem extract_block(const GeneralSystem& system, int begin, int end) {
  GeneralSystem out;
  const int n = end - begin;
  auto base = system.A;
  out.A = [base, begin, n](double t) -> Matrix { return base(t).block(begin, begin, n, n); };
  out.n = n;
  out.horizon = system.horizon;
  out.label = system.label + "[" + std::to_string(begin) + ":" + std::to_string(end) + "]";
  return out;
}

}  // namespace ned
