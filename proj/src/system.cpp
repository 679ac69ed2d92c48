#include "fastslow/system.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace fastslow {

namespace {

struct TermEval {
    double tx, dtx;  // tx(A) and its derivative in A
    double tt, dtt;  // tth(B) and its derivative in B
};

inline void trig_pair(Trig t, int freq_zero, double arg, double& v, double& dv) {
    if (freq_zero) {
        v = (t == Trig::Cos) ? 1.0 : 0.0;
        dv = (t == Trig::Cos) ? 0.0 : 1.0;
        return;
    }
    const double c = std::cos(arg), s = std::sin(arg);
    if (t == Trig::Cos) {
        v = c;
        dv = -s;
    } else {
        v = s;
        dv = c;
    }
}

inline TermEval eval_term(const TrigTerm& t, int d, double x, const SlowVec& theta) {
    TermEval e{};
    trig_pair(t.tx, t.kx == 0, kTwoPi * t.kx * x, e.tx, e.dtx);
    double phase = 0.0;
    bool zero = true;
    for (int j = 0; j < d; ++j) {
        if (t.m[j] != 0) {
            phase += t.m[j] * theta[j];
            zero = false;
        }
    }
    trig_pair(t.tth, zero, kTwoPi * phase, e.tt, e.dtt);
    return e;
}

bool depends_on_theta(const TrigTerm& t) {
    return std::any_of(t.m.begin(), t.m.end(), [](int v) { return v != 0; });
}

}  // namespace

FastSlowSystem::FastSlowSystem(std::string name, int d, int degree, std::vector<TrigTerm> f_terms,
                               std::vector<std::vector<TrigTerm>> omega_terms)
    : name_(std::move(name)),
      d_(d),
      degree_(degree),
      f_terms_(std::move(f_terms)),
      omega_terms_(std::move(omega_terms)) {
    if (d_ < 1 || d_ > kMaxSlowDim)
        throw PreconditionError("slow dimension must be in [1, " + std::to_string(kMaxSlowDim) + "]");
    if (static_cast<int>(omega_terms_.size()) != d_)
        throw PreconditionError("omega must have exactly d components");
    auto check_m = [&](const TrigTerm& t) {
        for (int j = d_; j < kMaxSlowDim; ++j)
            if (t.m[j] != 0) throw PreconditionError("theta frequency index beyond d");
    };
    for (const auto& t : f_terms_) check_m(t);
    for (const auto& comp : omega_terms_)
        for (const auto& t : comp) check_m(t);

    SystemBounds& b = bounds_;
    double sum_dx = 0.0, sum_dxx = 0.0;
    Eigen::VectorXd dth = Eigen::VectorXd::Zero(d_), dxth = Eigen::VectorXd::Zero(d_);
    Eigen::MatrixXd thth = Eigen::MatrixXd::Zero(d_, d_);
    for (const auto& t : f_terms_) {
        const double a = std::abs(t.c);
        sum_dx += a * kTwoPi * std::abs(t.kx);
        sum_dxx += a * std::pow(kTwoPi * t.kx, 2);
        for (int j = 0; j < d_; ++j) {
            dth[j] += a * kTwoPi * std::abs(t.m[j]);
            dxth[j] += a * kTwoPi * kTwoPi * std::abs(t.kx * t.m[j]);
            for (int i = 0; i < d_; ++i)
                thth(i, j) += a * kTwoPi * kTwoPi * std::abs(t.m[i] * t.m[j]);
        }
    }
    b.lambda = degree_ - sum_dx;
    b.sup_dx_f = degree_ + sum_dx;
    b.sup_dtheta_f = dth.norm();
    b.sup_dxx_f = sum_dxx;
    b.sup_dxtheta_f = dxth.norm();
    b.sup_dthth_f = thth.norm();
    b.sup_f2 = std::max({b.sup_dxx_f, b.sup_dxtheta_f, b.sup_dthth_f});

    Eigen::VectorXd om = Eigen::VectorXd::Zero(d_), omx = Eigen::VectorXd::Zero(d_),
                    omxx = Eigen::VectorXd::Zero(d_);
    Eigen::MatrixXd omth = Eigen::MatrixXd::Zero(d_, d_), omxth = Eigen::MatrixXd::Zero(d_, d_);
    double omthth_sq = 0.0;
    for (int i = 0; i < d_; ++i) {
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d_, d_);
        for (const auto& t : omega_terms_[i]) {
            const double a = std::abs(t.c);
            om[i] += a;
            omx[i] += a * kTwoPi * std::abs(t.kx);
            omxx[i] += a * std::pow(kTwoPi * t.kx, 2);
            for (int j = 0; j < d_; ++j) {
                omth(i, j) += a * kTwoPi * std::abs(t.m[j]);
                omxth(i, j) += a * kTwoPi * kTwoPi * std::abs(t.kx * t.m[j]);
                for (int k = 0; k < d_; ++k)
                    hess(j, k) += a * kTwoPi * kTwoPi * std::abs(t.m[j] * t.m[k]);
            }
        }
        omthth_sq += hess.squaredNorm();
    }
    b.sup_omega = om.norm();
    b.sup_dx_omega = omx.norm();
    b.sup_dtheta_omega = omth.norm();
    b.sup_omega2 = std::max({omxx.norm(), omxth.norm(), std::sqrt(omthth_sq)});
    b.K = std::max({b.sup_dx_omega, b.sup_dtheta_omega, b.sup_dtheta_f});

    if (!(b.lambda > 2.0)) {
        std::ostringstream os;
        os << "system '" << name_ << "': certified expansion bound " << b.lambda
           << " is not > 2";
        throw PreconditionError(os.str());
    }
    lambda_ = b.lambda;
    K_ = b.K;
}

void FastSlowSystem::set_declared_constants(double lambda, double K) {
    if (!(lambda > 2.0)) throw PreconditionError("declared lambda must be > 2");
    if (lambda > bounds_.lambda * (1.0 + 1e-12))
        throw PreconditionError("declared lambda exceeds the certified lower bound on d_x f");
    if (K < bounds_.K * (1.0 - 1e-12))
        throw PreconditionError("declared K is below the certified sup-norm bound");
    lambda_ = lambda;
    K_ = K;
}

double FastSlowSystem::f_lift(double x, const SlowVec& theta) const {
    double v = degree_ * x;
    for (const auto& t : f_terms_) {
        const TermEval e = eval_term(t, d_, x, theta);
        v += t.c * e.tx * e.tt;
    }
    return v;
}

double FastSlowSystem::dfdx(double x, const SlowVec& theta) const {
    double v = degree_;
    for (const auto& t : f_terms_) {
        if (t.kx == 0) continue;
        const TermEval e = eval_term(t, d_, x, theta);
        v += t.c * kTwoPi * t.kx * e.dtx * e.tt;
    }
    return v;
}

SlowVec FastSlowSystem::dfdtheta(double x, const SlowVec& theta) const {
    SlowVec g = SlowVec::Zero(d_);
    for (const auto& t : f_terms_) {
        if (!depends_on_theta(t)) continue;
        const TermEval e = eval_term(t, d_, x, theta);
        for (int j = 0; j < d_; ++j) g[j] += t.c * kTwoPi * t.m[j] * e.tx * e.dtt;
    }
    return g;
}

double FastSlowSystem::d2fdx2(double x, const SlowVec& theta) const {
    double v = 0.0;
    for (const auto& t : f_terms_) {
        if (t.kx == 0) continue;
        const TermEval e = eval_term(t, d_, x, theta);
        v -= t.c * std::pow(kTwoPi * t.kx, 2) * e.tx * e.tt;
    }
    return v;
}

SlowVec FastSlowSystem::d2fdxdtheta(double x, const SlowVec& theta) const {
    SlowVec g = SlowVec::Zero(d_);
    for (const auto& t : f_terms_) {
        if (t.kx == 0 || !depends_on_theta(t)) continue;
        const TermEval e = eval_term(t, d_, x, theta);
        for (int j = 0; j < d_; ++j)
            g[j] += t.c * kTwoPi * t.kx * kTwoPi * t.m[j] * e.dtx * e.dtt;
    }
    return g;
}

SlowMat FastSlowSystem::d2fdtheta2(double x, const SlowVec& theta) const {
    SlowMat h = SlowMat::Zero(d_, d_);
    for (const auto& t : f_terms_) {
        if (!depends_on_theta(t)) continue;
        const TermEval e = eval_term(t, d_, x, theta);
        for (int i = 0; i < d_; ++i)
            for (int j = 0; j < d_; ++j)
                h(i, j) -= t.c * kTwoPi * kTwoPi * t.m[i] * t.m[j] * e.tx * e.tt;
    }
    return h;
}

SlowVec FastSlowSystem::omega(double x, const SlowVec& theta) const {
    SlowVec w(d_);
    for (int i = 0; i < d_; ++i) {
        double v = 0.0;
        for (const auto& t : omega_terms_[i]) {
            const TermEval e = eval_term(t, d_, x, theta);
            v += t.c * e.tx * e.tt;
        }
        w[i] = v;
    }
    return w;
}

SlowVec FastSlowSystem::domega_dx(double x, const SlowVec& theta) const {
    SlowVec w(d_);
    for (int i = 0; i < d_; ++i) {
        double v = 0.0;
        for (const auto& t : omega_terms_[i]) {
            if (t.kx == 0) continue;
            const TermEval e = eval_term(t, d_, x, theta);
            v += t.c * kTwoPi * t.kx * e.dtx * e.tt;
        }
        w[i] = v;
    }
    return w;
}

SlowMat FastSlowSystem::domega_dtheta(double x, const SlowVec& theta) const {
    SlowMat m = SlowMat::Zero(d_, d_);
    for (int i = 0; i < d_; ++i) {
        for (const auto& t : omega_terms_[i]) {
            if (!depends_on_theta(t)) continue;
            const TermEval e = eval_term(t, d_, x, theta);
            for (int j = 0; j < d_; ++j) m(i, j) += t.c * kTwoPi * t.m[j] * e.tx * e.dtt;
        }
    }
    return m;
}

MapValue FastSlowSystem::eval(double x, const SlowVec& theta) const {
    return MapValue{f_lift(x, theta), omega(x, theta)};
}

bool FastSlowSystem::theta_independent_f() const {
    return std::none_of(f_terms_.begin(), f_terms_.end(), depends_on_theta);
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json term_to_json(const TrigTerm& t, int d) {
    nlohmann::json m = nlohmann::json::array();
    for (int j = 0; j < d; ++j) m.push_back(t.m[j]);
    return {{"c", t.c},
            {"kx", t.kx},
            {"x", t.tx == Trig::Cos ? "cos" : "sin"},
            {"m", m},
            {"theta", t.tth == Trig::Cos ? "cos" : "sin"}};
}

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

Trig parse_trig(const nlohmann::json& j, const std::string& where) {
    if (!j.is_string()) throw ConfigError(where + ": expected \"cos\" or \"sin\"");
    const auto s = j.get<std::string>();
    if (s == "cos") return Trig::Cos;
    if (s == "sin") return Trig::Sin;
    throw ConfigError(where + ": expected \"cos\" or \"sin\", got '" + s + "'");
}

TrigTerm term_from_json(const nlohmann::json& j, int d, const std::string& where) {
    reject_unknown(j, {"c", "kx", "x", "m", "theta"}, where);
    TrigTerm t;
    if (!j.contains("c") || !j["c"].is_number()) throw ConfigError(where + ": 'c' must be a number");
    t.c = j["c"].get<double>();
    if (j.contains("kx")) {
        if (!j["kx"].is_number_integer()) throw ConfigError(where + ": 'kx' must be an integer");
        t.kx = j["kx"].get<int>();
    }
    if (j.contains("x")) t.tx = parse_trig(j["x"], where + ".x");
    if (j.contains("theta")) t.tth = parse_trig(j["theta"], where + ".theta");
    if (j.contains("m")) {
        const auto& m = j["m"];
        if (!m.is_array() || static_cast<int>(m.size()) != d)
            throw ConfigError(where + ": 'm' must be an integer array of length d");
        for (int k = 0; k < d; ++k) {
            if (!m[k].is_number_integer()) throw ConfigError(where + ": 'm' entries must be integers");
            t.m[k] = m[k].get<int>();
        }
    }
    return t;
}

}  // namespace

nlohmann::json FastSlowSystem::to_json() const {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& t : f_terms_) f.push_back(term_to_json(t, d_));
    nlohmann::json om = nlohmann::json::array();
    for (const auto& comp : omega_terms_) {
        nlohmann::json c = nlohmann::json::array();
        for (const auto& t : comp) c.push_back(term_to_json(t, d_));
        om.push_back(c);
    }
    return {{"name", name_}, {"d", d_},         {"degree", degree_}, {"f", f},
            {"omega", om},   {"lambda", lambda_}, {"K", K_}};
}

SystemPtr system_from_json(const nlohmann::json& spec) {
    reject_unknown(spec, {"name", "d", "degree", "f", "omega", "lambda", "K"}, "system");
    if (!spec.contains("d") || !spec["d"].is_number_integer())
        throw ConfigError("system: 'd' must be an integer");
    if (!spec.contains("degree") || !spec["degree"].is_number_integer())
        throw ConfigError("system: 'degree' must be an integer");
    const int d = spec["d"].get<int>();
    if (d < 1 || d > kMaxSlowDim) throw ConfigError("system: 'd' out of range");
    std::vector<TrigTerm> f;
    if (spec.contains("f")) {
        if (!spec["f"].is_array()) throw ConfigError("system: 'f' must be an array of terms");
        for (std::size_t i = 0; i < spec["f"].size(); ++i)
            f.push_back(term_from_json(spec["f"][i], d, "system.f[" + std::to_string(i) + "]"));
    }
    if (!spec.contains("omega") || !spec["omega"].is_array() ||
        static_cast<int>(spec["omega"].size()) != d)
        throw ConfigError("system: 'omega' must be an array of d term lists");
    std::vector<std::vector<TrigTerm>> om(d);
    for (int i = 0; i < d; ++i) {
        const auto& comp = spec["omega"][i];
        if (!comp.is_array()) throw ConfigError("system: omega component must be an array");
        for (std::size_t k = 0; k < comp.size(); ++k)
            om[i].push_back(term_from_json(
                comp[k], d, "system.omega[" + std::to_string(i) + "][" + std::to_string(k) + "]"));
    }
    const std::string name = spec.value("name", std::string("inline"));
    std::shared_ptr<FastSlowSystem> sys;
    try {
        sys = std::make_shared<FastSlowSystem>(name, d, spec["degree"].get<int>(), f, om);
        if (spec.contains("lambda") || spec.contains("K")) {
            const double lam = spec.value("lambda", sys->lambda());
            const double K = spec.value("K", sys->K());
            sys->set_declared_constants(lam, K);
        }
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    return sys;
}

// ---------------------------------------------------------------------------

ValidationReport validate_system(const FastSlowSystem& sys, int grid_x, int grid_theta) {
    const int d = sys.dim();
    ValidationReport rep;
    rep.min_dx_f = std::numeric_limits<double>::infinity();
    const double h = 1e-6;
    const double rel_tol = 1e-6;
    std::size_t n_theta = 1;
    for (int j = 0; j < d; ++j) n_theta *= static_cast<std::size_t>(grid_theta);

    auto check = [&](double fd, double an, const char* what) {
        const double err = std::abs(fd - an) / std::max(1.0, std::abs(an));
        rep.max_fd_rel_error = std::max(rep.max_fd_rel_error, err);
        if (err > rel_tol)
            throw PreconditionError(std::string("system '") + sys.name() +
                                    "': finite-difference check failed for " + what);
    };

    for (std::size_t ti = 0; ti < n_theta; ++ti) {
        SlowVec th(d);
        std::size_t rem = ti;
        for (int j = 0; j < d; ++j) {
            th[j] = (static_cast<double>(rem % grid_theta) + 0.61) / grid_theta;
            rem /= grid_theta;
        }
        for (int ix = 0; ix < grid_x; ++ix) {
            const double x = (ix + 0.37) / grid_x;
            ++rep.probes;
            const double fx = sys.dfdx(x, th);
            rep.min_dx_f = std::min(rep.min_dx_f, fx);
            if (fx < sys.lambda())
                throw PreconditionError("system '" + sys.name() + "': d_x f below lambda on probe grid");

            check((sys.f_lift(x + h, th) - sys.f_lift(x - h, th)) / (2 * h), fx, "d_x f");
            const SlowVec wx = sys.domega_dx(x, th);
            const SlowVec wp = sys.omega(x + h, th), wm = sys.omega(x - h, th);
            for (int i = 0; i < d; ++i) check((wp[i] - wm[i]) / (2 * h), wx[i], "d_x omega");

            const SlowVec ft = sys.dfdtheta(x, th);
            const SlowMat wt = sys.domega_dtheta(x, th);
            for (int j = 0; j < d; ++j) {
                SlowVec tp = th, tm = th;
                tp[j] += h;
                tm[j] -= h;
                check((sys.f_lift(x, tp) - sys.f_lift(x, tm)) / (2 * h), ft[j], "d_theta f");
                const SlowVec op = sys.omega(x, tp), omn = sys.omega(x, tm);
                for (int i = 0; i < d; ++i) check((op[i] - omn[i]) / (2 * h), wt(i, j), "d_theta omega");
            }
            const double sup = std::max({wx.norm(), wt.norm(), ft.norm()});
            rep.max_sup_norm = std::max(rep.max_sup_norm, sup);
            if (sup > sys.K() * (1.0 + 1e-12))
                throw PreconditionError("system '" + sys.name() + "': K does not bound the sup-norms");
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------

std::vector<std::string> fixture_ids() { return {"LIN", "CBD", "CPL", "DRIFT"}; }

SystemPtr make_fixture(const std::string& id) {
    auto term = [](double c, int kx, Trig tx, int m0, Trig tth) {
        TrigTerm t;
        t.c = c;
        t.kx = kx;
        t.tx = tx;
        t.m[0] = m0;
        t.tth = tth;
        return t;
    };
    if (id == "LIN")
        return std::make_shared<FastSlowSystem>(
            "LIN", 1, 3, std::vector<TrigTerm>{},
            std::vector<std::vector<TrigTerm>>{{term(1.0, 1, Trig::Cos, 0, Trig::Cos)}});
    if (id == "CBD")
        return std::make_shared<FastSlowSystem>(
            "CBD", 1, 3, std::vector<TrigTerm>{},
            std::vector<std::vector<TrigTerm>>{
                {term(1.0, 1, Trig::Cos, 0, Trig::Cos), term(-1.0, 3, Trig::Cos, 0, Trig::Cos)}});
    if (id == "CPL")
        return std::make_shared<FastSlowSystem>(
            "CPL", 1, 3, std::vector<TrigTerm>{term(0.9 / kTwoPi, 1, Trig::Sin, 1, Trig::Sin)},
            std::vector<std::vector<TrigTerm>>{
                {term(1.0, 0, Trig::Cos, 1, Trig::Sin), term(1.0, 1, Trig::Cos, 0, Trig::Cos)}});
    if (id == "DRIFT")
        return std::make_shared<FastSlowSystem>(
            "DRIFT", 1, 3, std::vector<TrigTerm>{},
            std::vector<std::vector<TrigTerm>>{{term(1.0, 0, Trig::Cos, 0, Trig::Cos)}});
    throw ConfigError("unknown fixture '" + id + "'");
}

}  // namespace fastslow
