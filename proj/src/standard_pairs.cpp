#include "fastslow/standard_pairs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include <boost/math/interpolators/cardinal_quintic_b_spline.hpp>

#include "fastslow/parallel.hpp"

namespace fastslow {

using boost::math::interpolators::cardinal_quintic_b_spline;

PairConstants default_constants(const FastSlowSystem& sys) {
    const SystemBounds& b = sys.bounds();
    PairConstants k;
    k.delta = 0.1;
    k.c1 = 4.0 * (sys.K() + 1.0) / (sys.lambda() - 2.0);
    k.D = 10.0 * std::max({1.0, b.sup_f2, b.sup_omega2});
    k.c2 = 40.0 * (1.0 + k.D * k.c1 * std::max(1.0, b.sup_f2) / (sys.lambda() * sys.lambda()));
    return k;
}

ConstantCheck check_constants(const FastSlowSystem& sys, double eps, const PairConstants& k) {
    const SystemBounds& b = sys.bounds();
    ConstantCheck c;
    const double ec1 = eps * k.c1;
    c.Lambda = sys.lambda() - ec1 * b.sup_dtheta_f;
    auto margin = [](double lhs, double rhs) {
        if (rhs <= 0.0) return lhs >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0;
        return lhs / rhs - 1.0;
    };
    const double F2 = b.sup_dxx_f + 2.0 * b.sup_dxtheta_f * ec1 + b.sup_dthth_f * ec1 * ec1 +
                      b.sup_dtheta_f * eps * k.D * k.c1;
    const double W2 = b.sup_omega2 * (1.0 + 2.0 * ec1 + ec1 * ec1);
    c.margin_c1 = margin(k.c1 * (c.Lambda - 1.0 - eps * b.sup_dtheta_omega), b.sup_dx_omega);
    c.margin_D = margin(k.D * k.c1 * (c.Lambda * c.Lambda - 1.0 - eps * b.sup_dtheta_omega), W2 + k.c1 * F2);
    c.margin_c2 = margin(k.c2 * (1.0 - 1.0 / c.Lambda), F2 / (c.Lambda * c.Lambda));
    c.ok = c.Lambda > 1.5 && c.margin_c1 >= 0.0 && c.margin_D >= 0.0 && c.margin_c2 >= 0.0;
    return c;
}

// ---------------------------------------------------------------------------

double simpson(const std::vector<double>& v, double h) {
    const std::size_t n = v.size();
    if (n < 3 || n % 2 == 0) throw PreconditionError("simpson: need an odd number >= 3 of samples");
    double s = v.front() + v.back();
    for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 ? 4.0 : 2.0) * v[i];
    return s * h / 3.0;
}

StandardPair make_pair(double a, double b, const std::function<SlowVec(double)>& G,
                       const std::function<double(double)>& rho, double eps) {
    if (!(b > a)) throw PreconditionError("make_pair: need b > a");
    StandardPair p;
    const double shift = std::floor(a);
    p.a = a - shift;
    p.b = b - shift;
    p.eps = eps;
    p.G.resize(kPairGrid + 1);
    p.rho.resize(kPairGrid + 1);
    for (int i = 0; i <= kPairGrid; ++i) {
        const double x = a + (b - a) * i / kPairGrid;
        p.G[i] = G(x);
        p.rho[i] = rho ? rho(x) : 1.0;
        if (!(p.rho[i] > 0.0)) throw PreconditionError("make_pair: density must be positive");
    }
    const double Z = simpson(p.rho, p.h());
    for (double& r : p.rho) r /= Z;
    p.constant = std::all_of(p.G.begin(), p.G.end(), [&](const SlowVec& g) { return g == p.G.front(); });
    return p;
}

StandardPair make_constant_pair(double a, double b, const SlowVec& theta0, double eps,
                                const std::function<double(double)>& rho) {
    return make_pair(a, b, [&](double) { return theta0; }, rho, eps);
}

struct PairInterp::Impl {
    bool constant;
    SlowVec G0;
    std::vector<cardinal_quintic_b_spline<double>> g;
    std::optional<cardinal_quintic_b_spline<double>> r;
};

PairInterp::PairInterp(const StandardPair& p) {
    auto impl = std::make_shared<Impl>();
    impl->constant = p.constant;
    impl->G0 = p.G.front();
    const int d = p.dim();
    const double h = p.h();
    if (!p.constant) {
        std::vector<double> col(p.G.size());
        for (int j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < p.G.size(); ++i) col[i] = p.G[i][j];
            impl->g.emplace_back(col, p.a, h);
        }
    }
    impl->r.emplace(p.rho, p.a, h);
    impl_ = std::move(impl);
}

SlowVec PairInterp::G(double x) const {
    if (impl_->constant) return impl_->G0;
    SlowVec v(impl_->G0.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = impl_->g[j](x);
    return v;
}

SlowVec PairInterp::dG(double x) const {
    SlowVec v = SlowVec::Zero(impl_->G0.size());
    if (impl_->constant) return v;
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = impl_->g[j].prime(x);
    return v;
}

SlowVec PairInterp::d2G(double x) const {
    SlowVec v = SlowVec::Zero(impl_->G0.size());
    if (impl_->constant) return v;
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = impl_->g[j].double_prime(x);
    return v;
}

double PairInterp::rho(double x) const { return (*impl_->r)(x); }
double PairInterp::drho(double x) const { return impl_->r->prime(x); }

double StandardFamily::total_weight() const { return pairwise_sum(weights); }

double integrate(const StandardPair& p, const TestFunction& g) {
    std::vector<double> v(p.G.size());
    for (int i = 0; i <= kPairGrid; ++i) v[i] = g(wrap01(p.node(i)), p.G[i]) * p.rho[i];
    return simpson(v, p.h());
}

double integrate(const StandardFamily& fam, const TestFunction& g) {
    std::vector<double> terms(fam.pairs.size());
    for (std::size_t j = 0; j < fam.pairs.size(); ++j) terms[j] = fam.weights[j] * integrate(fam.pairs[j], g);
    return pairwise_sum(terms);
}

PairValidation validate_pair(const StandardPair& p, const PairConstants& k) {
    PairValidation v;
    auto fail = [&](const std::string& why) {
        if (v.ok) v.failure = why;
        v.ok = false;
    };
    v.length = p.length();
    const double tol = 1e-12;
    if (v.length < k.delta / 2 - tol || v.length > k.delta + tol) fail("interval length outside [delta/2, delta]");
    v.mass = simpson(p.rho, p.h());
    if (std::abs(v.mass - 1.0) > 1e-10) fail("density does not integrate to 1");
    if (std::any_of(p.rho.begin(), p.rho.end(), [](double r) { return !(r > 0.0); })) fail("density not positive");
    const PairInterp in(p);
    const int R = 4 * kPairGrid;
    for (int i = 0; i <= R; ++i) {
        const double x = p.a + p.length() * i / R;
        v.sup_dG = std::max(v.sup_dG, in.dG(x).norm());
        v.sup_d2G = std::max(v.sup_d2G, in.d2G(x).norm());
        v.sup_log_drho = std::max(v.sup_log_drho, std::abs(in.drho(x) / in.rho(x)));
    }
    const double slack = 1.0 + 1e-9;
    if (v.sup_dG > p.eps * k.c1 * slack + 1e-14) fail("|G'| exceeds eps c1");
    if (v.sup_d2G > p.eps * k.D * k.c1 * slack + 1e-10) fail("|G''| exceeds eps D c1");
    if (v.sup_log_drho > k.c2 * slack) fail("|rho'/rho| exceeds c2");
    return v;
}

// ---------------------------------------------------------------------------

namespace {

struct CurveMap {
    const FastSlowSystem& sys;
    const PairInterp& in;
    double value(double z) const { return sys.f_lift(z, in.G(z)); }
    double deriv(double z) const {
        const SlowVec th = in.G(z);
        return sys.dfdx(z, th) + sys.dfdtheta(z, th).dot(in.dG(z));
    }
};

/// Solves value(z) = y on [lo, hi] where value is increasing.
double invert_monotone(const CurveMap& fm, double y, double lo, double hi, double guess) {
    double z = std::clamp(guess, lo, hi);
    for (int it = 0; it < 200; ++it) {
        const double r = fm.value(z) - y;
        if (std::abs(r) <= 4e-16 * std::max(1.0, std::abs(y))) return z;
        if (r > 0.0)
            hi = z;
        else
            lo = z;
        double zn = z - r / fm.deriv(z);
        if (!(zn > lo && zn < hi)) zn = 0.5 * (lo + hi);
        if (std::abs(zn - z) <= 1e-15 || hi - lo <= 1e-15) return zn;
        z = zn;
    }
    throw InvariantViolation("pushforward_decompose: branch inversion did not converge");
}

struct Piece {
    StandardPair pair;
    double weight;
};

std::vector<Piece> decompose_one(const StandardPair& p, double parent_weight, const FastSlowSystem& sys,
                                 double eps, const PairConstants& k, double& min_dfG) {
    const PairInterp in(p);
    const CurveMap fm{sys, in};
    const double A = fm.value(p.a), B = fm.value(p.b);
    const double L = B - A;
    if (!(L > 0.0)) throw InvariantViolation("pushforward_decompose: image has non-positive length");
    const int m = static_cast<int>(std::ceil(L / k.delta - 1e-12));
    const double len = L / m;
    min_dfG = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 4 * kPairGrid; ++i)
        min_dfG = std::min(min_dfG, fm.deriv(p.a + p.length() * i / (4 * kPairGrid)));
    if (!(min_dfG > 1.5)) {
        std::ostringstream os;
        os << "pushforward_decompose: f_G' = " << min_dfG << " is not > 3/2";
        throw InvariantViolation(os.str());
    }

    std::vector<Piece> out;
    out.reserve(static_cast<std::size_t>(m));
    double z_prev = p.a;
    for (int j = 0; j < m; ++j) {
        const double y0 = A + j * len;
        StandardPair q;
        q.eps = eps > 0.0 ? eps : p.eps;
        q.G.resize(kPairGrid + 1);
        q.rho.resize(kPairGrid + 1);
        for (int i = 0; i <= kPairGrid; ++i) {
            double z;
            if (j == 0 && i == 0)
                z = p.a;
            else if (j == m - 1 && i == kPairGrid)
                z = p.b;
            else
                z = invert_monotone(fm, y0 + len * i / kPairGrid, p.a, p.b, z_prev);
            z_prev = z;
            const SlowVec th = in.G(z);
            q.G[i] = eps == 0.0 ? th : SlowVec(th + eps * sys.omega(z, th));
            q.rho[i] = in.rho(z) / fm.deriv(z);
        }
        const double shift = std::floor(y0);
        q.a = y0 - shift;
        q.b = q.a + len;
        const double nu = simpson(q.rho, q.h());
        for (double& r : q.rho) r /= nu;
        q.constant = std::all_of(q.G.begin(), q.G.end(), [&](const SlowVec& g) { return g == q.G.front(); });
        out.push_back({std::move(q), parent_weight * nu});
    }
    return out;
}

}  // namespace

StandardFamily pushforward_decompose(const StandardFamily& fam, const FastSlowSystem& sys, double eps,
                                     const DecomposeOptions& opt, DecomposeStats* stats) {
    const PairConstants& k = opt.constants;
    if (sys.lambda() - eps * k.c1 * sys.bounds().sup_dtheta_f <= 1.5)
        throw PreconditionError("pushforward_decompose: eps too large (lambda - eps c1 |d_theta f| <= 3/2)");
    if (fam.pairs.size() != fam.weights.size()) throw PreconditionError("pushforward_decompose: malformed family");

    const std::size_t n = fam.pairs.size();
    std::vector<std::vector<Piece>> parts(n);
    std::vector<double> min_d(n, 0.0);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        parts[i] = decompose_one(fam.pairs[i], fam.weights[i], sys, eps, k, min_d[i]);
        if (opt.validate) {
            for (std::size_t j = 0; j < parts[i].size(); ++j) {
                const PairValidation v = validate_pair(parts[i][j].pair, k);
                if (!v.ok) {
                    std::ostringstream os;
                    os << "pushforward_decompose: output pair (" << i << ", " << j << ") invalid: " << v.failure;
                    throw InvariantViolation(os.str());
                }
            }
        }
    });

    StandardFamily out;
    DecomposeStats st;
    st.pairs_in = n;
    st.min_dfG = n ? *std::min_element(min_d.begin(), min_d.end()) : 0.0;
    std::vector<double> kept;
    for (auto& pv : parts) {
        for (auto& pc : pv) {
            if (pc.weight < opt.prune) {
                ++st.pruned;
                st.pruned_mass += pc.weight;
                continue;
            }
            out.pairs.push_back(std::move(pc.pair));
            out.weights.push_back(pc.weight);
        }
    }
    const double total = out.total_weight();
    for (double& w : out.weights) w /= total;
    st.pairs_out = out.pairs.size();
    if (stats) *stats = st;
    return out;
}

double integrate_pushed(const StandardPair& p, const FastSlowSystem& sys, double eps, const TestFunction& g,
                        int refine) {
    const PairInterp in(p);
    const int n = kPairGrid * std::max(1, refine);
    const double h = p.length() / n;
    std::vector<double> v(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        const double x = p.a + h * i;
        const SlowVec th = refine == 1 ? p.G[i] : in.G(x);
        const double r = refine == 1 ? p.rho[i] : in.rho(x);
        const double fx = sys.f(wrap01(x), th);
        const SlowVec th1 = th + eps * sys.omega(wrap01(x), th);
        v[i] = g(fx, th1) * r;
    }
    return simpson(v, h);
}

// ---------------------------------------------------------------------------

PairSampler::PairSampler(const StandardFamily& fam) : fam_(fam) {
    double acc = 0.0;
    for (std::size_t j = 0; j < fam_.pairs.size(); ++j) {
        const StandardPair& p = fam_.pairs[j];
        Entry e;
        e.index = j;
        e.cdf.resize(p.rho.size());
        e.cdf[0] = 0.0;
        for (std::size_t i = 1; i < p.rho.size(); ++i) e.cdf[i] = e.cdf[i - 1] + 0.5 * p.h() * (p.rho[i - 1] + p.rho[i]);
        if (!p.constant) e.interp = std::make_shared<PairInterp>(p);
        entries_.push_back(std::move(e));
        acc += fam_.weights[j];
        cum_weights_.push_back(acc);
    }
    if (entries_.empty()) throw PreconditionError("PairSampler: empty family");
}

PairPoint PairSampler::sample(Stream& s) const {
    std::size_t j = 0;
    if (entries_.size() > 1) {
        const double u = s.uniform() * cum_weights_.back();
        j = static_cast<std::size_t>(std::upper_bound(cum_weights_.begin(), cum_weights_.end(), u) - cum_weights_.begin());
        j = std::min(j, entries_.size() - 1);
    }
    const Entry& e = entries_[j];
    const StandardPair& p = fam_.pairs[e.index];
    const double target = s.uniform() * e.cdf.back();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(e.cdf.begin(), e.cdf.end(), target) - e.cdf.begin());
    i = std::clamp<std::size_t>(i, 1, e.cdf.size() - 1);
    const double c0 = e.cdf[i - 1], c1 = e.cdf[i];
    const double w = c1 > c0 ? (target - c0) / (c1 - c0) : 0.0;
    double x;
    if (p.rho.front() == p.rho.back() &&
        std::all_of(p.rho.begin(), p.rho.end(), [&](double r) { return r == p.rho.front(); }))
        x = p.a + (target / e.cdf.back()) * p.length();
    else
        x = p.node(static_cast<int>(i - 1)) + w * p.h();
    PairPoint pt;
    pt.x = wrap01(x);
    pt.theta = p.constant ? p.G.front() : e.interp->G(x);
    return pt;
}

PairPoint sample(const StandardPair& p, Stream& s) { return PairSampler(StandardFamily::single(p)).sample(s); }

SignedSplit split_signed(const StandardPair& base, const std::vector<double>& psi, double c2) {
    if (psi.size() != base.rho.size()) throw PreconditionError("split_signed: psi must live on the pair grid");
    double sup = 0.0, sup_d = 0.0;
    const double h = base.h();
    for (std::size_t i = 0; i < psi.size(); ++i) {
        sup = std::max(sup, std::abs(psi[i]));
        if (i > 0) sup_d = std::max(sup_d, std::abs(psi[i] - psi[i - 1]) / h);
    }
    SignedSplit s;
    s.shift = std::max({2.0 * sup, sup + sup_d / c2, 1e-300});
    s.plus = base;
    s.minus = base;
    for (std::size_t i = 0; i < psi.size(); ++i) {
        s.plus.rho[i] = psi[i] + s.shift;
        s.minus.rho[i] = s.shift - psi[i];
    }
    const double zp = simpson(s.plus.rho, h), zm = simpson(s.minus.rho, h);
    for (auto& r : s.plus.rho) r /= zp;
    for (auto& r : s.minus.rho) r /= zm;
    s.alpha_plus = zp / 2.0;
    s.alpha_minus = zm / 2.0;
    // psi = ((psi + m) - (m - psi)) / 2.
    return s;
}

// ---------------------------------------------------------------------------

nlohmann::json family_to_json(const StandardFamily& fam) {
    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t j = 0; j < fam.pairs.size(); ++j) {
        const auto& p = fam.pairs[j];
        nlohmann::json G = nlohmann::json::array();
        for (const auto& g : p.G) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index k = 0; k < g.size(); ++k) row.push_back(g[k]);
            G.push_back(row);
        }
        pairs.push_back({{"a", p.a}, {"b", p.b}, {"eps", p.eps}, {"nu", fam.weights[j]}, {"G", G}, {"rho", p.rho}});
    }
    return {{"format", "fastslow.standard_family"}, {"version", 1}, {"grid", kPairGrid}, {"pairs", pairs}};
}

StandardFamily family_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "fastslow.standard_family")
            throw ConfigError("standard family: unexpected format tag");
        if (j.at("version").get<int>() != 1) throw ConfigError("standard family: unsupported version");
        if (j.at("grid").get<int>() != kPairGrid) throw ConfigError("standard family: grid size mismatch");
        StandardFamily fam;
        for (const auto& pj : j.at("pairs")) {
            StandardPair p;
            p.a = pj.at("a").get<double>();
            p.b = pj.at("b").get<double>();
            p.eps = pj.at("eps").get<double>();
            p.rho = pj.at("rho").get<std::vector<double>>();
            for (const auto& row : pj.at("G")) {
                const auto v = row.get<std::vector<double>>();
                p.G.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
            }
            if (p.G.size() != kPairGrid + 1 || p.rho.size() != kPairGrid + 1)
                throw ConfigError("standard family: wrong number of grid values");
            p.constant = std::all_of(p.G.begin(), p.G.end(), [&](const SlowVec& g) { return g == p.G.front(); });
            fam.weights.push_back(pj.at("nu").get<double>());
            fam.pairs.push_back(std::move(p));
        }
        return fam;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("standard family: ") + e.what());
    }
}

}  // namespace fastslow
