#include "fastslow/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace fastslow {

using nlohmann::json;

json to_json(const Estimate& e) { return {{"value", e.value}, {"se", e.std_error}}; }

json to_json(const LineFit& f) {
    return {{"intercept", f.intercept}, {"slope", f.slope}, {"slope_se", f.slope_se}};
}

json to_json(const SlowVec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json to_json(const SlowMat& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        a.push_back(r);
    }
    return a;
}

json to_json(const SRBDensity& d) {
    return {{"theta", to_json(d.theta)},
            {"N", d.N()},
            {"iterations", d.iterations},
            {"residual", d.residual},
            {"min_density", d.rho.minCoeff()},
            {"max_density", d.rho.maxCoeff()},
            {"sup_deviation_from_one", (d.rho.array() - 1.0).abs().maxCoeff()}};
}

json to_json(const DiffusionContext& c) {
    json gnorm = json::array();
    for (const auto& g : c.Gamma) gnorm.push_back(g.norm());
    json j = {{"theta", to_json(c.theta)},
              {"N", c.N},
              {"M", c.M},
              {"omega_bar", to_json(c.omega_bar)},
              {"Gamma0", to_json(c.Gamma.front())},
              {"Gamma_norms", gnorm},
              {"sigma2", to_json(c.sigma2)},
              {"sigma", to_json(c.sigma)},
              {"tail_estimate", c.tail_estimate},
              {"min_eigenvalue_raw", c.min_eigenvalue_raw},
              {"coboundary", c.coboundary},
              {"power_iterations", c.power_iterations},
              {"fixed_point_residual", c.fixed_point_residual}};
    j["decay_rate"] = c.decay_rate ? json(*c.decay_rate) : json(nullptr);
    if (c.D_omega_bar.size() > 0) j["D_omega_bar"] = to_json(c.D_omega_bar);
    return j;
}

json to_json(const AveragingReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) rows.push_back({{"eps", row.eps}, {"N", row.N}, {"sup_error", to_json(row.sup_error)}});
    return {{"rows", rows},       {"fit", to_json(r.fit)},     {"monotone", r.monotone}, {"slope_lo", r.slope_lo},
            {"slope_hi", r.slope_hi}, {"slope_ok", r.slope_ok}, {"pass", r.pass}};
}

json to_json(const MomentReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"gap", row.gap},
                        {"windows", row.windows},
                        {"m2", to_json(row.m2)},
                        {"m4", to_json(row.m4)},
                        {"ratio2", row.ratio2},
                        {"ratio4", row.ratio4}});
    return {{"eps", r.eps},
            {"min_gap", r.min_gap},
            {"rows", rows},
            {"max_ratio2", r.max_ratio2},
            {"max_ratio4", r.max_ratio4},
            {"ratio2_lo", r.ratio2_lo},
            {"ratio2_hi", r.ratio2_hi},
            {"fit2", to_json(r.fit2)},
            {"fit4", to_json(r.fit4)},
            {"band", {r.band_lo, r.band_hi}},
            {"exponent4_min", r.exponent4_min},
            {"ratio_ok", r.ratio_ok},
            {"exponent_ok", r.exponent_ok},
            {"pass", r.pass}};
}

json to_json(const ResidualReport& r) {
    return {{"test_fn", r.test_fn}, {"variant", r.variant},           {"conditioning", r.conditioning},
            {"s", r.s},             {"t", r.t},                       {"eps", r.eps},
            {"residual", to_json(r.residual)}, {"slack", r.slack}, {"pass", r.pass}};
}

json to_json(const CltReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json mean = json::array();
        for (const auto& m : row.mean) mean.push_back(to_json(m));
        rows.push_back({{"t", row.t},
                        {"mean", mean},
                        {"cov", to_json(row.cov)},
                        {"cov_se", to_json(row.cov_se)},
                        {"Sigma", to_json(row.Sigma)},
                        {"abs_error", row.abs_error},
                        {"rel_error", row.rel_error},
                        {"rel_error_se", row.rel_error_se},
                        {"skewness", row.skewness},
                        {"excess_kurtosis", row.excess_kurtosis}});
    }
    json cf = json::array();
    for (const auto& c : r.charfn)
        cf.push_back({{"t", c.t},
                      {"lambda", to_json(c.lambda)},
                      {"empirical_re", to_json(c.emp_re)},
                      {"empirical_im", to_json(c.emp_im)},
                      {"re", c.re},
                      {"im", c.im},
                      {"within", c.within}});
    json tt = json::array();
    for (const auto& c : r.two_time)
        tt.push_back({{"s", c.s},
                      {"t", c.t},
                      {"empirical", to_json(c.empirical)},
                      {"empirical_se", to_json(c.empirical_se)},
                      {"predicted", to_json(c.predicted)},
                      {"within", c.within}});
    return {{"eps", r.eps},
            {"N", r.N},
            {"tolerances",
             {{"rel_cov", r.tol.rel_cov},
              {"skew", r.tol.skew},
              {"kurt", r.tol.kurt},
              {"abs_var", r.tol.abs_var},
              {"slack_c", r.tol.slack_c}}},
            {"rows", rows},
            {"charfn", cf},
            {"two_time", tt},
            {"cov_ok", r.cov_ok},
            {"skew_ok", r.skew_ok},
            {"kurt_ok", r.kurt_ok},
            {"charfn_ok", r.charfn_ok},
            {"two_time_ok", r.two_time_ok},
            {"pass", r.pass}};
}

json to_json(const ShadowStudy& s) {
    return {{"eps", s.eps},
            {"n", s.n},
            {"points", s.points},
            {"max_residual", s.max_residual},
            {"max_terminal_gap", s.max_terminal_gap},
            {"max_shadow_constant", s.max_shadow_constant},
            {"max_derivative_exponent", s.max_derivative_exponent},
            {"derivative_ok", s.derivative_ok},
            {"failures", s.failures},
            {"first_failure", s.first_failure}};
}

json to_json(const PushforwardStudy& s) {
    return {{"eps", s.eps},
            {"pairs", s.pairs},
            {"functions", s.functions},
            {"output_pairs", s.output_pairs},
            {"max_error", s.max_error},
            {"revalidated", s.revalidated},
            {"failure", s.failure},
            {"refine", s.refine}};
}

json to_json(const CovarianceTrajectory& cov, const std::vector<double>& times) {
    json rows = json::array();
    for (double t : times) {
        const CovarianceState s = cov.at(t);
        rows.push_back({{"t", t}, {"theta_bar", to_json(s.theta_bar)}, {"Sigma", to_json(s.Sigma)}, {"S", to_json(s.S)}});
    }
    return {{"theta0", to_json(cov.averaged().theta0)},
            {"lipschitz", cov.averaged().lipschitz},
            {"max_route_gap", cov.max_route_gap},
            {"max_inverse_gap", cov.max_inverse_gap},
            {"max_liouville_gap", cov.max_liouville_gap},
            {"min_eigenvalue", cov.min_eigenvalue},
            {"rows", rows}};
}

// ---------------------------------------------------------------------------

std::string fmt17(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string text_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> w(header.size(), 0);
    for (std::size_t j = 0; j < header.size(); ++j) w[j] = header[j].size();
    for (const auto& r : rows)
        for (std::size_t j = 0; j < r.size() && j < w.size(); ++j) w[j] = std::max(w[j], r[j].size());
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t j = 0; j < w.size(); ++j) {
            const std::string cell = j < r.size() ? r[j] : "";
            os << std::left << std::setw(static_cast<int>(w[j])) << cell << (j + 1 < w.size() ? "  " : "");
        }
        os << '\n';
    };
    line(header);
    std::vector<std::string> rule;
    for (std::size_t x : w) rule.emplace_back(x, '-');
    line(rule);
    for (const auto& r : rows) line(r);
    return os.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_ensemble_csv(const std::string& path, const Ensemble& ens) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "trajectory_id,t";
    for (int j = 0; j < ens.d; ++j) out << ",theta_" << j;
    for (int j = 0; j < ens.d; ++j) out << ",zeta_" << j;
    out << '\n';
    for (std::size_t k = 0; k < ens.N; ++k)
        for (std::size_t i = 0; i < ens.nt(); ++i) {
            out << k << ',' << fmt17(ens.times[i]);
            const SlowVec th = ens.theta_at(k, i), z = ens.zeta_at(k, i);
            for (int j = 0; j < ens.d; ++j) out << ',' << fmt17(th[j]);
            for (int j = 0; j < ens.d; ++j) out << ',' << fmt17(z[j]);
            out << '\n';
        }
}

void write_limit_csv(const std::string& path, const CovarianceTrajectory& cov, const std::vector<double>& times) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    const int d = cov.dim();
    out << 't';
    for (int j = 0; j < d; ++j) out << ",theta_bar_" << j;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out << ",Sigma_" << i << j;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out << ",S_" << i << j;
    out << '\n';
    for (double t : times) {
        const CovarianceState s = cov.at(t);
        out << fmt17(t);
        for (int j = 0; j < d; ++j) out << ',' << fmt17(s.theta_bar[j]);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out << ',' << fmt17(s.Sigma(i, j));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out << ',' << fmt17(s.S(i, j));
        out << '\n';
    }
}

void write_density_csv(const std::string& path, const SRBDensity& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "cell,x,rho\n";
    const int N = d.N();
    for (int i = 0; i < N; ++i) out << i << ',' << fmt17((i + 0.5) / N) << ',' << fmt17(d.rho[i]) << '\n';
}

void write_autocov_csv(const std::string& path, const DiffusionContext& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    const auto d = c.Gamma.front().rows();
    out << 'k';
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) out << ",Gamma_" << i << j;
    out << '\n';
    for (std::size_t k = 0; k < c.Gamma.size(); ++k) {
        out << k;
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) out << ',' << fmt17(c.Gamma[k](i, j));
        out << '\n';
    }
}

void write_svg(const std::string& path, const std::string& title, const std::vector<Series>& series) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double W = 640, H = 400, L = 60, R = 20, Tm = 40, B = 40;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tm - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << L << "\" y=\"" << H - 10 << "\" font-size=\"11\">" << x0 << "</text>\n";
    os << "<text x=\"" << W - R << "\" y=\"" << H - 10 << "\" font-size=\"11\" text-anchor=\"end\">" << x1 << "</text>\n";
    os << "<text x=\"4\" y=\"" << H - B << "\" font-size=\"11\">" << y0 << "</text>\n";
    os << "<text x=\"4\" y=\"" << Tm + 4 << "\" font-size=\"11\">" << y1 << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* c = colors[k % 5];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << W - R - 4 << "\" y=\"" << Tm + 14 * (k + 1) << "\" font-size=\"11\" text-anchor=\"end\" fill=\""
           << c << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    write_text(path, os.str());
}

}  // namespace fastslow
