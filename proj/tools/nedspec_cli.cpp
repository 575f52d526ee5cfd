// Command line front end: parse a system (config file or built-in), run one
// pipeline stage, and write auditable JSON/CSV artifacts plus a run log.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "nedspec/contraction.hpp"
#include "nedspec/report.hpp"

namespace fs = std::filesystem;
using namespace ned;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string example_name;
  double lambda0 = -2.0;
  double a = -1.0;
  double lambda1 = 1.0;
  double delta = 0.5;
  double horizon = defaults::horizon;
  double tol = defaults::endpoint_tol;
  double lambda = 0.0;
  std::string out_dir = ".";
  unsigned seed = 20240901;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool with_delta = false,
                bool with_lambda = false) {
  auto* config = cmd->add_option("--config", opt.config_path, "system config file");
  auto* example = cmd->add_option("--example", opt.example_name,
                                  "built-in system: example1 | example2 | planar");
  config->excludes(example);
  cmd->add_option("--lambda0", opt.lambda0, "example parameter lambda0");
  cmd->add_option("--a", opt.a, "example parameter a");
  cmd->add_option("--lambda1", opt.lambda1, "example parameter lambda1");
  cmd->add_option("--horizon", opt.horizon, "half-line truncation T_max");
  cmd->add_option("--tol", opt.tol, "spectrum endpoint tolerance");
  cmd->add_option("--out", opt.out_dir, "output directory");
  cmd->add_option("--seed", opt.seed, "seed for all randomized sampling");
  if (with_delta) cmd->add_option("--delta", opt.delta, "target perturbation smallness");
  if (with_lambda) cmd->add_option("--lambda", opt.lambda, "shift to test")->required();
}

LinearSystem load_system(const CommonOptions& opt, std::ostream& log) {
  if (!opt.config_path.empty()) {
    std::ifstream f(opt.config_path);
    if (!f) throw Error("usage", "cannot read config '" + opt.config_path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    LinearSystem sys = parse_system(ss.str());
    log << "system: config " << opt.config_path << " (dim " << sys.dim() << ", horizon "
        << sys.horizon << ")\n";
    return sys;
  }
  if (opt.example_name.empty()) {
    throw Error("usage", "one of --config or --example is required");
  }
  std::map<std::string, double> params{
      {"lambda0", opt.lambda0}, {"a", opt.a}, {"lambda1", opt.lambda1}};
  auto cat = builtin_example(opt.example_name, params, opt.horizon);
  log << "system: builtin " << opt.example_name << " (dim " << cat.system.dim() << ", horizon "
      << cat.system.horizon << ")\n";
  if (cat.reference) {
    log << "reference spectrum:";
    for (auto [lo, hi] : cat.reference->intervals) log << " [" << lo << ", " << hi << "]";
    log << "\n";
  }
  return cat.system;
}

SweepPlan make_plan(const CommonOptions& opt) {
  SweepPlan plan;
  plan.endpoint_tol = opt.tol;
  plan.sampling.seed = opt.seed;
  return plan;
}

void log_growth(const GrowthEstimate& g, std::ostream& log) {
  log << "growth fit: K0 = " << g.K0 << ", a = " << g.a << ", eps_bar = " << g.eps_bar << "\n";
}

void log_spectrum(const SpectrumResult& s, std::ostream& log) {
  log << "spectrum:";
  for (const auto& iv : s.intervals) {
    log << " [" << iv.lo << ", " << iv.hi << "]";
    if (iv.degenerate) log << "(deg)";
    if (iv.possibly_merged) log << "(near)";
  }
  log << " tolerance " << s.tolerance << "\n";
}

int run_spectrum(const CommonOptions& opt, std::ostream& log) {
  LinearSystem sys = load_system(opt, log);
  SweepPlan plan = make_plan(opt);
  DichotomyTester tester(sys, plan.sampling);
  log_growth(tester.growth(), log);
  SpectrumResult spec = compute_spectrum(tester, plan);
  log_spectrum(spec, log);
  write_file(opt.out_dir + "/result.json", spectrum_to_json(spec));
  write_file(opt.out_dir + "/sweep.csv", sweep_to_csv(spec));
  return 0;
}

int run_dichotomy(const CommonOptions& opt, std::ostream& log) {
  LinearSystem sys = load_system(opt, log);
  SweepPlan plan = make_plan(opt);
  DichotomyTester tester(sys, plan.sampling);
  log_growth(tester.growth(), log);
  DichotomyVerdict v = tester.test(opt.lambda);
  log << "lambda " << v.lambda << ": " << (v.admits ? "admits" : "no dichotomy") << ", rank "
      << v.projector_rank << ", K = " << v.K << ", alpha = " << v.alpha << ", eps = " << v.eps
      << "\n";
  write_file(opt.out_dir + "/result.json", verdict_to_json(v));
  return 0;
}

int run_triangularize(const CommonOptions& opt, std::ostream& log) {
  LinearSystem sys = load_system(opt, log);
  auto [transform, tri] = triangularize(sys);
  double residual = similarity_residual([&sys](double t) { return sys.eval(t); }, transform, tri);
  log << "triangularization: lower residual " << tri.lower_residual() << ", similarity residual "
      << residual << "\n";
  write_file(opt.out_dir + "/transform.csv", transform_to_csv(transform));
  std::ostringstream os;
  os << "{\n  \"lower_residual\": " << format_double(tri.lower_residual())
     << ",\n  \"similarity_residual\": " << format_double(residual) << "\n}\n";
  write_file(opt.out_dir + "/result.json", os.str());
  return 0;
}

int run_contract(const CommonOptions& opt, std::ostream& log, bool certify_only) {
  LinearSystem sys = load_system(opt, log);
  SweepPlan plan = make_plan(opt);
  DichotomyTester tester(sys, plan.sampling);
  log_growth(tester.growth(), log);
  SpectrumResult spec = compute_spectrum(tester, plan);
  log_spectrum(spec, log);

  ContractionOutput out = contract_system(as_general(sys), opt.delta, plan);
  log << "contraction: M_delta = " << out.M_delta << ", K_delta = " << out.K_delta
      << ", kappa = " << out.kappa << ", eta = " << out.eta
      << ", K_delta_eps = " << out.K_delta_eps << "\n";
  log << "certified window: [0, " << out.certified_until << "], last crossing "
      << out.last_crossing << "\n";

  CertificateReport report = certify(out, opt.delta, spec);
  for (const auto& c : report.clauses) {
    log << "clause " << c.name << ": " << (c.pass ? "pass" : "FAIL") << " (worst t = " << c.worst_t
        << ", margin = " << c.margin << ")\n";
  }
  write_file(opt.out_dir + "/certificate.json", certificate_to_json(out, report));
  if (!certify_only) {
    write_file(opt.out_dir + "/result.json", spectrum_to_json(spec));
    write_file(opt.out_dir + "/sweep.csv", sweep_to_csv(spec));
    write_file(opt.out_dir + "/contraction.csv", contraction_grid_to_csv(out));
    int prev_block = -1, channel = 0;
    for (size_t i = 0; i < out.channels.size(); ++i) {
      int block = i < out.channel_block.size() ? out.channel_block[i] : 0;
      channel = (block == prev_block) ? channel + 1 : 0;
      prev_block = block;
      write_file(opt.out_dir + "/schedule_" + std::to_string(block) + "_" +
                     std::to_string(channel) + ".csv",
                 schedule_to_csv(out.channels[i], out.horizon));
    }
  }
  return report.all_pass() ? 0 : 1;
}

int run_example(const CommonOptions& opt, std::ostream& log) {
  if (opt.example_name.empty()) throw Error("usage", "--example NAME is required");
  std::map<std::string, double> params{
      {"lambda0", opt.lambda0}, {"a", opt.a}, {"lambda1", opt.lambda1}};
  auto cat = builtin_example(opt.example_name, params, opt.horizon);
  std::string config = serialize_system(cat.system);
  write_file(opt.out_dir + "/config.cfg", config);
  std::ostringstream os;
  os << "{\n  \"name\": \"" << opt.example_name << "\",\n  \"reference_spectrum\": [";
  for (size_t i = 0; i < cat.reference->intervals.size(); ++i) {
    auto [lo, hi] = cat.reference->intervals[i];
    os << (i ? ", " : "") << "[" << format_double(lo) << ", " << format_double(hi) << "]";
  }
  os << "]\n}\n";
  write_file(opt.out_dir + "/result.json", os.str());
  log << "wrote config.cfg for " << opt.example_name << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonuniform exponential dichotomy spectrum toolkit"};
  app.require_subcommand(1);

  CommonOptions opt;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "compute the dichotomy spectrum");
  add_common(spectrum_cmd, opt);
  auto* dichotomy_cmd = app.add_subcommand("dichotomy", "test one shift");
  add_common(dichotomy_cmd, opt, false, true);
  auto* tri_cmd = app.add_subcommand("triangularize", "orthogonal triangularization");
  add_common(tri_cmd, opt);
  auto* contract_cmd = app.add_subcommand("contract", "diagonal-plus-small contraction");
  add_common(contract_cmd, opt, true);
  auto* certify_cmd = app.add_subcommand("certify", "re-run the pipeline and emit the certificate");
  add_common(certify_cmd, opt, true);
  auto* example_cmd = app.add_subcommand("example", "emit a built-in system config");
  add_common(example_cmd, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::error_code ec;
  fs::create_directories(opt.out_dir, ec);

  std::ostringstream log;
  log << "command:";
  for (int i = 0; i < argc; ++i) log << " " << argv[i];
  log << "\nseed: " << opt.seed << "\n";
  auto started = std::chrono::steady_clock::now();

  int status = 2;
  try {
    if (spectrum_cmd->parsed()) status = run_spectrum(opt, log);
    else if (dichotomy_cmd->parsed()) status = run_dichotomy(opt, log);
    else if (tri_cmd->parsed()) status = run_triangularize(opt, log);
    else if (contract_cmd->parsed()) status = run_contract(opt, log, false);
    else if (certify_cmd->parsed()) status = run_contract(opt, log, true);
    else if (example_cmd->parsed()) status = run_example(opt, log);
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    std::cerr << "error: " << e.what() << "\n";
    status = std::string(e.where()).rfind("usage", 0) == 0 ? 2 : 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    std::cerr << "error: " << e.what() << "\n";
    status = 1;
  }

  auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  log << "status: " << status << "\nelapsed_ms: " << elapsed.count() << "\n";
  try {
    write_file(opt.out_dir + "/run.log", log.str());
  } catch (const std::exception&) {
    std::cerr << log.str();
  }
  return status;
}
