#pragma once

#include <string>

#include "nedspec/contraction.hpp"

namespace ned {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// {lambda, admits, K, alpha, eps, rank, margin, ...flags}
std::string verdict_to_json(const DichotomyVerdict& v);

/// {intervals: [[a,b],...], tolerance, flags: [...]}
std::string spectrum_to_json(const SpectrumResult& s);

/// RFC 4180, header "lambda,admits,rank,alpha,eps,K".
std::string sweep_to_csv(const SpectrumResult& s);

/// Certificate JSON: constants, clause outcomes, per-channel crossings.
std::string certificate_to_json(const ContractionOutput& out, const CertificateReport& report);

/// Schedule dump: t, c, lambda, c_bar, lambda_bar, log_mu.
std::string schedule_to_csv(const ChannelResult& channel, double horizon, int grid_points = 512);

/// Checkpoint diagnostics: t, log_norm, cond.
std::string checkpoints_to_csv(const TransitionOperator& op);

/// Transform dump: t, entries of S(t) in row-major order.
std::string transform_to_csv(const KinematicTransform& s, int grid_points = 512);

/// Grid dump of the contracted form: t, C entries, ||B||.
std::string contraction_grid_to_csv(const ContractionOutput& out, int grid_points = 512);

void write_file(const std::string& path, const std::string& content);

}  // namespace ned
