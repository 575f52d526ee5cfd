#include "nedspec/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ned {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string verdict_to_json(const DichotomyVerdict& v) {
  ordered_json j;
  j["lambda"] = double(v.lambda);
  j["admits"] = v.admits;
  j["K"] = double(v.K);
  j["alpha"] = double(v.alpha);
  j["eps"] = double(v.eps);
  j["rank"] = v.projector_rank;
  j["margin"] = double(v.margin);
  j["gap_fail"] = v.gap_fail;
  j["overflow"] = v.overflow;
  j["eps_ge_alpha"] = v.eps_ge_alpha;
  j["eps_cap"] = double(v.eps_cap);
  return j.dump(2);
}

std::string spectrum_to_json(const SpectrumResult& s) {
  ordered_json j;
  ordered_json intervals = ordered_json::array();
  ordered_json flags = ordered_json::array();
  for (const auto& iv : s.intervals) {
    intervals.push_back({double(iv.lo), double(iv.hi)});
    ordered_json f;
    f["degenerate"] = iv.degenerate;
    f["possibly_merged"] = iv.possibly_merged;
    flags.push_back(f);
  }
  j["intervals"] = intervals;
  j["tolerance"] = double(s.tolerance);
  j["flags"] = flags;
  return j.dump(2);
}

std::string sweep_to_csv(const SpectrumResult& s) {
  std::ostringstream os;
  os << "lambda,admits,rank,alpha,eps,K\r\n";
  for (const auto& r : s.samples) {
    os << format_double(r.lambda) << ',' << (r.admits ? 1 : 0) << ',' << r.rank << ','
       << format_double(r.alpha) << ',' << format_double(r.eps) << ',' << format_double(r.K)
       << "\r\n";
  }
  return os.str();
}

std::string certificate_to_json(const ContractionOutput& out, const CertificateReport& report) {
  ordered_json j;
  j["delta"] = double(out.delta);
  j["M_delta"] = double(out.M_delta);
  j["K_delta"] = double(out.K_delta);
  j["kappa"] = double(out.kappa);
  j["eta"] = double(out.eta);
  j["K_delta_eps"] = double(out.K_delta_eps);
  j["upsilon"] = double(out.upsilon);
  j["certified_window"] = {double(0.0), double(out.certified_until)};
  j["similarity_residual"] = double(out.similarity_residual);
  ordered_json clauses = ordered_json::array();
  for (const auto& c : report.clauses) {
    ordered_json jc;
    jc["name"] = c.name;
    jc["pass"] = c.pass;
    jc["worst_t"] = double(c.worst_t);
    jc["margin"] = double(c.margin);
    clauses.push_back(jc);
  }
  j["clauses"] = clauses;
  ordered_json crossings = ordered_json::array();
  for (const auto& channel : out.crossing_times) {
    ordered_json row = ordered_json::array();
    for (double t : channel) row.push_back(double(t));
    crossings.push_back(row);
  }
  j["crossing_times"] = crossings;
  j["all_pass"] = report.all_pass();
  return j.dump(2);
}

std::string schedule_to_csv(const ChannelResult& channel, double horizon, int grid_points) {
  // rebind the smoothed view to this copy of the schedule
  SmoothedSchedule smoothed = channel.smoothed;
  smoothed.source = &channel.schedule;
  std::ostringstream os;
  os << "t,c,lambda,c_bar,lambda_bar,log_mu\r\n";
  for (int i = 0; i <= grid_points; ++i) {
    double t = horizon * i / grid_points;
    os << format_double(t) << ',' << format_double(channel.schedule.c_value(t)) << ','
       << format_double(channel.schedule.lambda_value(t)) << ','
       << format_double(smoothed.c_value(t)) << ',' << format_double(smoothed.lambda_value(t))
       << ',' << format_double(channel.scaling.log_mu(t)) << "\r\n";
  }
  return os.str();
}

std::string checkpoints_to_csv(const TransitionOperator& op) {
  std::ostringstream os;
  os << "t,log_norm,cond\r\n";
  for (const auto& [t, log_norm, cond] : op.checkpoint_diagnostics()) {
    os << format_double(t) << ',' << format_double(log_norm) << ',' << format_double(cond)
       << "\r\n";
  }
  return os.str();
}

std::string transform_to_csv(const KinematicTransform& s, int grid_points) {
  std::ostringstream os;
  os << "t";
  for (int r = 0; r < s.dim(); ++r)
    for (int c = 0; c < s.dim(); ++c) os << ",S_" << r << c;
  os << "\r\n";
  for (int i = 0; i <= grid_points; ++i) {
    double t = s.horizon() * i / grid_points;
    Matrix m = s.S(t);
    os << format_double(t);
    for (int r = 0; r < s.dim(); ++r)
      for (int c = 0; c < s.dim(); ++c) os << ',' << format_double(m(r, c));
    os << "\r\n";
  }
  return os.str();
}

std::string contraction_grid_to_csv(const ContractionOutput& out, int grid_points) {
  std::ostringstream os;
  os << "t";
  for (int r = 0; r < out.dim; ++r) os << ",C_" << r;
  os << ",B_norm\r\n";
  for (int i = 0; i <= grid_points; ++i) {
    double t = out.horizon * i / grid_points;
    Vector c = out.C(t);
    os << format_double(t);
    for (int r = 0; r < out.dim; ++r) os << ',' << format_double(c(r));
    os << ',' << format_double(spectral_norm(out.B(t))) << "\r\n";
  }
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("report", "cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw Error("report", "write to '" + path + "' failed");
}

}  // namespace ned
