#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fastslow/experiments.hpp"

namespace fastslow {

nlohmann::json to_json(const Estimate& e);
nlohmann::json to_json(const LineFit& f);
nlohmann::json to_json(const SlowVec& v);
nlohmann::json to_json(const SlowMat& m);
nlohmann::json to_json(const SRBDensity& d);
nlohmann::json to_json(const DiffusionContext& c);
nlohmann::json to_json(const AveragingReport& r);
nlohmann::json to_json(const MomentReport& r);
nlohmann::json to_json(const ResidualReport& r);
nlohmann::json to_json(const CltReport& r);
nlohmann::json to_json(const ShadowStudy& s);
nlohmann::json to_json(const PushforwardStudy& s);
/// Theta_bar, Sigma and S at the given times.
nlohmann::json to_json(const CovarianceTrajectory& cov, const std::vector<double>& times);

/// 17 significant digits, enough to round-trip a double.
std::string fmt17(double v);

/// Aligned text table.
std::string text_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

void write_text(const std::string& path, const std::string& content);
void write_json(const std::string& path, const nlohmann::json& j);

/// CSV: trajectory_id, t, theta_0..theta_{d-1}, zeta_0..zeta_{d-1}.
void write_ensemble_csv(const std::string& path, const Ensemble& ens);
/// CSV: t, theta_bar_*, Sigma_ij, S_ij.
void write_limit_csv(const std::string& path, const CovarianceTrajectory& cov, const std::vector<double>& times);
/// CSV: cell, x, rho.
void write_density_csv(const std::string& path, const SRBDensity& d);
/// CSV: k, Gamma_k entries.
void write_autocov_csv(const std::string& path, const DiffusionContext& c);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};
/// Line plot with one polyline per series.
void write_svg(const std::string& path, const std::string& title, const std::vector<Series>& series);

}  // namespace fastslow
