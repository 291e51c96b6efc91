#include <pathmed/eif.hpp>
#include <pathmed/error.hpp>
#include <pathmed/parallel.hpp>
#include <pathmed/rng.hpp>
#include <pathmed/stats.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace pathmed {

namespace {

double clamp_ratio(double r)
{
    if (!std::isfinite(r)) return kRatioMax;
    return std::clamp(r, kRatioMin, kRatioMax);
}

Eigen::VectorXd as_vector(std::span<const double> v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> prepend(double first, std::span<const double> rest)
{
    std::vector<double> out;
    out.reserve(rest.size() + 1);
    out.push_back(first);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

/// Everything the per-row integrals need, evaluated once per row.
struct RowContext {
    double a = 0.0;
    double z = 0.0;
    double y = 0.0;
    std::vector<double> w;
    DensityRow g;
    DensityRow e;
    DensityRow r;
};

class RowEvaluator {
public:
    RowEvaluator(const NuisanceBundle& b, const Dataset& est) : b_(b)
    {
        a_ = est.values(b.exposure);
        if (b.has_mediator()) z_ = est.values(b.mediator);
        y_ = est.values(est.outcome());
        W_ = est.matrix(b.covariates);
        if (!b.g.discrete() && !(b.exposure_bounds.upper > b.exposure_bounds.lower)) {
            throw EstimationError("exposure '" + b.exposure + "' has zero-width support");
        }
        if (b.has_mediator() && !b.r.discrete() && !(b.mediator_bounds.upper > b.mediator_bounds.lower)) {
            throw EstimationError("mediator '" + b.mediator + "' has zero-width support");
        }
    }

    RowContext context(std::size_t i) const
    {
        RowContext c;
        c.a = a_[i];
        c.z = b_.has_mediator() ? z_[i] : 0.0;
        c.y = y_[i];
        c.w.resize(b_.covariates.size());
        for (std::size_t j = 0; j < c.w.size(); ++j) c.w[j] = W_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        c.g = b_.g.at(c.w);
        if (b_.has_mediator()) {
            c.e = b_.e.at(prepend(c.z, c.w));
            c.r = b_.r.at(c.w);
        } else {
            c.e = c.g;
        }
        return c;
    }

    double shift(double a) const { return apply_shift(a, b_.shift, b_.exposure_bounds); }

    /// Q at (a_j, z_j, w) for each j; z ignored without a mediator.
    Eigen::VectorXd Q(const RowContext& c, std::span<const double> a, std::span<const double> z) const
    {
        const auto m = static_cast<Eigen::Index>(a.size());
        const bool med = b_.has_mediator();
        const Eigen::Index off = med ? 2 : 1;
        Eigen::MatrixXd X(m, off + static_cast<Eigen::Index>(c.w.size()));
        for (Eigen::Index j = 0; j < m; ++j) {
            X(j, 0) = a[static_cast<std::size_t>(j)];
            if (med) X(j, 1) = z[static_cast<std::size_t>(j)];
            for (std::size_t k = 0; k < c.w.size(); ++k) X(j, off + static_cast<Eigen::Index>(k)) = c.w[k];
        }
        return b_.Q.predict(X);
    }

    Eigen::VectorXd phi_model(const RowContext& c, std::span<const double> a) const
    {
        const auto m = static_cast<Eigen::Index>(a.size());
        Eigen::MatrixXd X(m, 1 + static_cast<Eigen::Index>(c.w.size()));
        for (Eigen::Index j = 0; j < m; ++j) {
            X(j, 0) = a[static_cast<std::size_t>(j)];
            for (std::size_t k = 0; k < c.w.size(); ++k) X(j, 1 + static_cast<Eigen::Index>(k)) = c.w[k];
        }
        return b_.phi->predict(X);
    }

    std::vector<double> exposure_draws(std::span<const double> u) const
    {
        std::vector<double> a(u.size());
        const double lo = b_.exposure_bounds.lower, w = b_.exposure_bounds.upper - lo;
        for (std::size_t j = 0; j < u.size(); ++j) a[j] = lo + w * u[j];
        return a;
    }

    std::vector<double> mediator_draws(std::span<const double> v) const
    {
        std::vector<double> z(v.size());
        const double lo = b_.mediator_bounds.lower, w = b_.mediator_bounds.upper - lo;
        for (std::size_t j = 0; j < v.size(); ++j) z[j] = lo + w * v[j];
        return z;
    }

    double exposure_range() const { return b_.exposure_bounds.upper - b_.exposure_bounds.lower; }
    double mediator_range() const { return b_.mediator_bounds.upper - b_.mediator_bounds.lower; }

    /// Codes 1..k of a discrete variable.
    static std::vector<double> codes(std::size_t k)
    {
        std::vector<double> v(k);
        std::iota(v.begin(), v.end(), 1.0);
        return v;
    }

    /// phi(a, w) = integral of Q(d(a), z, w) r(z | w) dz.
    double phi_integration(const RowContext& c, double a, const McGrid& grid) const
    {
        const double da = shift(a);
        if (!b_.has_mediator()) {
            const double one[1] = {da};
            return Q(c, one, {})(0);
        }
        if (b_.r.discrete()) {
            const auto zs = codes(c.r.pmf.size());
            const std::vector<double> as(zs.size(), da);
            const Eigen::VectorXd q = Q(c, as, zs);
            return weighted_sum({q.data(), static_cast<std::size_t>(q.size())}, c.r.pmf);
        }
        const auto zs = mediator_draws(grid.v);
        const std::vector<double> as(zs.size(), da);
        const Eigen::VectorXd q = Q(c, as, zs);
        double s = 0.0;
        for (std::size_t j = 0; j < zs.size(); ++j) s += q(static_cast<Eigen::Index>(j)) * c.r.density(zs[j]);
        return mediator_range() * s / static_cast<double>(zs.size());
    }

    double phi(const RowContext& c, double a, PhiMethod method, const McGrid& grid) const
    {
        if (method == PhiMethod::pseudo_regression) {
            const double one[1] = {a};
            return phi_model(c, one)(0);
        }
        return phi_integration(c, a, grid);
    }

    const NuisanceBundle& bundle() const { return b_; }

private:
    const NuisanceBundle& b_;
    std::span<const double> a_, z_, y_;
    Eigen::MatrixXd W_;
};

} // namespace

std::string to_string(PhiMethod m)
{
    return m == PhiMethod::integration ? "integration" : "pseudo_regression";
}

std::string to_string(EffectKind k)
{
    switch (k) {
    case EffectKind::nde: return "NDE";
    case EffectKind::nie: return "NIE";
    case EffectKind::te: return "TE";
    case EffectKind::theta_shift: return "theta_shift";
    }
    return "?";
}

std::string to_string(EstimationMethod m)
{
    switch (m) {
    case EstimationMethod::integration: return "integration";
    case EstimationMethod::pseudo_regression: return "pseudo_regression";
    case EstimationMethod::tmle: return "tmle";
    case EstimationMethod::onestep: return "onestep";
    }
    return "?";
}

PhiMethod parse_phi_method(std::string_view text)
{
    if (text == "integration") return PhiMethod::integration;
    if (text == "pseudo_regression") return PhiMethod::pseudo_regression;
    throw ValidationError("unknown phi method '" + std::string(text) + "' (expected integration or pseudo_regression)");
}

EstimationMethod to_estimation_method(PhiMethod m)
{
    return m == PhiMethod::integration ? EstimationMethod::integration : EstimationMethod::pseudo_regression;
}

std::vector<std::string> adjustment_set(const Dataset& data, const Pathway& pathway)
{
    std::vector<std::string> out = data.names(Role::covariate);
    for (const auto& a : data.names(Role::exposure)) {
        if (a != pathway.exposure) out.push_back(a);
    }
    for (const auto& z : data.names(Role::mediator)) {
        if (z != pathway.mediator) out.push_back(z);
    }
    return out;
}

NuisanceBundle fit_nuisances(const Dataset& train, const Pathway& pathway, const ShiftSpec& shift,
                             const NuisanceOptions& opt)
{
    if (!train.contains(pathway.exposure)) throw ValidationError("unknown exposure '" + pathway.exposure + "'");
    if (!pathway.mediator.empty() && !train.contains(pathway.mediator)) {
        throw ValidationError("unknown mediator '" + pathway.mediator + "'");
    }
    NuisanceBundle b;
    b.exposure = pathway.exposure;
    b.mediator = pathway.mediator;
    b.covariates = adjustment_set(train, pathway);
    b.shift = shift;
    b.n_train = train.n();

    const auto yv = train.values(train.outcome());
    const Eigen::VectorXd y = as_vector(yv);
    const bool binary_y = train.column(train.outcome()).kind.kind == Kind::binary;
    const ResponseKind response = binary_y ? ResponseKind::binomial : ResponseKind::gaussian;

    std::vector<std::string> q_names{b.exposure};
    if (b.has_mediator()) q_names.push_back(b.mediator);
    q_names.insert(q_names.end(), b.covariates.begin(), b.covariates.end());
    b.Q = cv_select(opt.outcome_library, train.matrix(q_names), q_names, y, response, opt.cv);

    std::vector<std::string> t_names{b.exposure};
    t_names.insert(t_names.end(), b.covariates.begin(), b.covariates.end());
    b.Q_total = cv_select(opt.outcome_library, train.matrix(t_names), t_names, y, response, opt.cv);

    b.g = fit_density(train, b.exposure, b.covariates, opt.density, opt.heteroscedastic);
    b.exposure_bounds = shift_bounds(b.g);
    if (b.has_mediator()) {
        std::vector<std::string> e_cond{b.mediator};
        e_cond.insert(e_cond.end(), b.covariates.begin(), b.covariates.end());
        b.e = fit_density(train, b.exposure, e_cond, opt.density, opt.heteroscedastic);
        b.r = fit_density(train, b.mediator, b.covariates, opt.density, opt.heteroscedastic);
        b.mediator_bounds = shift_bounds(b.r);
    } else {
        b.e = b.g;
    }
    if (b.g.discrete() != shift.discrete) {
        throw ValidationError("shift for '" + b.exposure + "' must be " + (b.g.discrete() ? "discrete" : "continuous") +
                              " to match the exposure");
    }
    return b;
}

void fit_phi_regression(NuisanceBundle& b, const Dataset& train, const NuisanceOptions& opt)
{
    const RowEvaluator ev(b, train);
    const std::size_t n = train.n();
    Eigen::VectorXd pseudo(static_cast<Eigen::Index>(n));
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = ev.context(i);
        const double ratio = clamp_ratio(c.g.density(c.a) / c.e.density(c.a));
        const double da[1] = {ev.shift(c.a)};
        const double z[1] = {c.z};
        const double v = ratio * ev.Q(c, da, z)(0);
        pseudo(static_cast<Eigen::Index>(i)) = v;
        if (!std::isfinite(v)) bad.push_back(i);
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << "phi pseudo-outcome is not finite on training rows";
        for (std::size_t k = 0; k < std::min<std::size_t>(bad.size(), 10); ++k) os << ' ' << bad[k];
        if (bad.size() > 10) os << " ...";
        throw EstimationError(os.str());
    }
    std::vector<std::string> names{b.exposure};
    names.insert(names.end(), b.covariates.begin(), b.covariates.end());
    b.phi = cv_select(opt.phi_library, train.matrix(names), names, pseudo, ResponseKind::gaussian, opt.cv);
}

McGrid make_mc_grid(std::size_t draws, std::uint64_t seed)
{
    if (draws < 2) throw ValidationError("Monte Carlo integration needs at least two draws");
    Rng rng = make_rng(seed, {0x6d63});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t half = draws / 2;
    auto stratified = [&] {
        std::vector<double> x(2 * half);
        for (std::size_t j = 0; j < half; ++j) {
            x[j] = (static_cast<double>(j) + unif(rng)) / static_cast<double>(half);
            x[half + j] = 1.0 - x[j];
        }
        return x;
    };
    McGrid g;
    g.u = stratified();
    g.v = stratified();
    for (std::size_t j = g.v.size() - 1; j > 0; --j) {
        std::uniform_int_distribution<std::size_t> pick(0, j);
        std::swap(g.v[j], g.v[pick(rng)]);
    }
    return g;
}

McEstimate integrate_uniform(const std::function<double(double)>& f, double lo, double hi, std::span<const double> u)
{
    if (!(hi > lo)) throw EstimationError("integration range has zero width");
    if (u.empty()) throw ValidationError("integration needs draws");
    const double w = hi - lo;
    std::vector<double> vals(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) vals[j] = w * f(lo + w * u[j]);
    McEstimate m;
    m.value = stats::mean(vals);
    m.se = vals.size() > 1 ? std::sqrt(stats::variance_sample(vals) / static_cast<double>(vals.size())) : 0.0;
    return m;
}

double compute_dY(double y, double q, double g_delta, double e, double floor)
{
    return clamp_ratio(std::max(g_delta, floor) / std::max(e, floor)) * (y - q);
}

double weighted_sum(std::span<const double> values, std::span<const double> weights)
{
    if (values.size() != weights.size()) throw ValidationError("weighted sum needs matching lengths");
    double s = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) s += values[k] * weights[k];
    return s;
}

double compute_phi(const NuisanceBundle& bundle, const Dataset& est, std::size_t row, double a, PhiMethod method,
                   const McGrid& grid)
{
    if (method == PhiMethod::pseudo_regression && !bundle.phi) {
        throw ValidationError("pseudo-regression phi requested before fit_phi_regression");
    }
    const RowEvaluator ev(bundle, est);
    return ev.phi(ev.context(row), a, method, grid);
}

EifComponents compute_components(const NuisanceBundle& b, const Dataset& est, PhiMethod method, const McGrid& grid,
                                 unsigned workers)
{
    if (method == PhiMethod::pseudo_regression && !b.phi) {
        throw ValidationError("pseudo-regression phi requested before fit_phi_regression");
    }
    const RowEvaluator ev(b, est);
    const std::size_t n = est.n();
    EifComponents out;
    out.method = method;
    out.dY.resize(n);
    out.dA.resize(n);
    out.dZW.resize(n);
    const bool discrete = b.discrete_exposure();
    out.mc_draws = grid.size();

    const auto a_draws = discrete ? RowEvaluator::codes(static_cast<std::size_t>(b.g.n_classes)) : ev.exposure_draws(grid.u);
    const auto z_draws = b.has_mediator() && !b.r.discrete() ? ev.mediator_draws(grid.v) : std::vector<double>{};
    const double n_draws = static_cast<double>(a_draws.size());

    parallel_for(n, workers, [&](std::size_t i) {
        const auto c = ev.context(i);
        const double z1[1] = {c.z};
        const double a1[1] = {c.a};
        const double q_obs = ev.Q(c, a1, z1)(0);
        const double gd_obs = shifted_density(c.g, c.a, b.shift, b.exposure_bounds);
        out.dY[i] = compute_dY(c.y, q_obs, gd_obs, c.e.density(c.a), b.g.floor);

        // D^{Z,W}: Q integrated against g_delta at the observed (z, w).
        const std::vector<double> zs(a_draws.size(), c.z);
        const Eigen::VectorXd q = ev.Q(c, a_draws, zs);
        double dzw = 0.0;
        for (std::size_t j = 0; j < a_draws.size(); ++j) {
            dzw += q(static_cast<Eigen::Index>(j)) * shifted_density(c.g, a_draws[j], b.shift, b.exposure_bounds);
        }
        out.dZW[i] = discrete ? dzw : ev.exposure_range() * dzw / n_draws;

        // D^A: phi at the observed exposure minus its g-average.
        const double phi_obs = ev.phi(c, c.a, method, grid);
        double avg = 0.0;
        if (discrete) {
            for (std::size_t k = 0; k < a_draws.size(); ++k) avg += c.g.pmf[k] * ev.phi(c, a_draws[k], method, grid);
        } else if (method == PhiMethod::pseudo_regression) {
            const Eigen::VectorXd p = ev.phi_model(c, a_draws);
            for (std::size_t j = 0; j < a_draws.size(); ++j) avg += p(static_cast<Eigen::Index>(j)) * c.g.density(a_draws[j]);
            avg *= ev.exposure_range() / n_draws;
        } else {
            std::vector<double> shifted(a_draws.size());
            for (std::size_t j = 0; j < a_draws.size(); ++j) shifted[j] = ev.shift(a_draws[j]);
            if (!b.has_mediator()) {
                const Eigen::VectorXd qs = ev.Q(c, shifted, {});
                for (std::size_t j = 0; j < a_draws.size(); ++j) avg += qs(static_cast<Eigen::Index>(j)) * c.g.density(a_draws[j]);
                avg *= ev.exposure_range() / n_draws;
            } else if (b.r.discrete()) {
                // Exact sum over mediator codes inside the exposure integral.
                const std::size_t k = c.r.pmf.size();
                std::vector<double> as, zc;
                as.reserve(a_draws.size() * k);
                zc.reserve(a_draws.size() * k);
                for (std::size_t j = 0; j < a_draws.size(); ++j) {
                    for (std::size_t m = 0; m < k; ++m) {
                        as.push_back(shifted[j]);
                        zc.push_back(static_cast<double>(m + 1));
                    }
                }
                const Eigen::VectorXd qs = ev.Q(c, as, zc);
                for (std::size_t j = 0; j < a_draws.size(); ++j) {
                    double inner = 0.0;
                    for (std::size_t m = 0; m < k; ++m) inner += qs(static_cast<Eigen::Index>(j * k + m)) * c.r.pmf[m];
                    avg += inner * c.g.density(a_draws[j]);
                }
                avg *= ev.exposure_range() / n_draws;
            } else {
                // Joint (a, z) draws over the support rectangle.
                const Eigen::VectorXd qs = ev.Q(c, shifted, z_draws);
                for (std::size_t j = 0; j < a_draws.size(); ++j) {
                    avg += qs(static_cast<Eigen::Index>(j)) * c.r.density(z_draws[j]) * c.g.density(a_draws[j]);
                }
                avg *= ev.exposure_range() * ev.mediator_range() / n_draws;
            }
        }
        out.dA[i] = phi_obs - avg;
    });
    return out;
}

std::string EffectEstimate::type() const
{
    return to_string(kind) + "-" + to_string(method);
}

EffectEstimate make_estimate(EffectKind kind, EstimationMethod method, double psi, std::vector<double> eif, double alpha)
{
    EffectEstimate e;
    e.kind = kind;
    e.method = method;
    e.psi = psi;
    e.n = eif.size();
    if (e.n == 0) throw EstimationError("effect estimate needs at least one row");
    double ss = 0.0;
    for (double v : eif) ss += v * v;
    const double nn = static_cast<double>(e.n);
    e.variance = ss / nn / nn;
    e.se = std::sqrt(e.variance);
    const double z = stats::normal_critical(alpha);
    e.ci_lower = psi - z * e.se;
    e.ci_upper = psi + z * e.se;
    if (e.se > 0.0) {
        e.p_value = std::erfc(std::abs(psi / e.se) / std::numbers::sqrt2);
    } else {
        e.p_value = psi == 0.0 ? 1.0 : 0.0;
    }
    e.eif = std::move(eif);
    return e;
}

ThetaEstimate estimate_theta_shift(const EifComponents& c)
{
    const std::size_t n = c.size();
    if (n == 0) throw EstimationError("no estimation rows");
    ThetaEstimate t;
    t.eif.resize(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t.eif[i] = c.dY[i] + c.dA[i] + c.dZW[i];
        s += t.eif[i];
    }
    t.theta = s / static_cast<double>(n);
    for (auto& v : t.eif) v -= t.theta;
    return t;
}

EffectEstimate direct_effect(const ThetaEstimate& theta, std::span<const double> y, PhiMethod method, double alpha)
{
    if (theta.eif.size() != y.size()) throw ValidationError("theta and outcome rows differ");
    const double ybar = stats::mean(y);
    std::vector<double> eif(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) eif[i] = theta.eif[i] - (y[i] - ybar);
    return make_estimate(EffectKind::nde, to_estimation_method(method), theta.theta - ybar, std::move(eif), alpha);
}

void TotalEffectInputs::append(const TotalEffectInputs& o)
{
    y.insert(y.end(), o.y.begin(), o.y.end());
    q_obs.insert(q_obs.end(), o.q_obs.begin(), o.q_obs.end());
    q_shift.insert(q_shift.end(), o.q_shift.begin(), o.q_shift.end());
    h_obs.insert(h_obs.end(), o.h_obs.begin(), o.h_obs.end());
    h_shift.insert(h_shift.end(), o.h_shift.begin(), o.h_shift.end());
}

TotalEffectInputs total_effect_inputs(const NuisanceBundle& b, const Dataset& est)
{
    const auto a = est.values(b.exposure);
    const auto y = est.values(est.outcome());
    const auto W = est.matrix(b.covariates);
    const std::size_t n = est.n();
    TotalEffectInputs in;
    in.y.assign(y.begin(), y.end());
    in.q_obs.resize(n);
    in.q_shift.resize(n);
    in.h_obs.resize(n);
    in.h_shift.resize(n);

    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 1 + W.cols());
    X.rightCols(W.cols()) = W;
    X.col(0) = as_vector(a);
    const Eigen::VectorXd qo = b.Q_total.predict(X);
    for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), 0) = apply_shift(a[i], b.shift, b.exposure_bounds);
    const Eigen::VectorXd qs = b.Q_total.predict(X);

    std::vector<double> w(static_cast<std::size_t>(W.cols()));
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = W(ii, static_cast<Eigen::Index>(j));
        const auto row = b.g.at(w);
        const double da = X(ii, 0);
        in.q_obs[i] = qo(ii);
        in.q_shift[i] = qs(ii);
        in.h_obs[i] = clamp_ratio(shifted_density(row, a[i], b.shift, b.exposure_bounds) / row.density(a[i]));
        in.h_shift[i] = clamp_ratio(shifted_density(row, da, b.shift, b.exposure_bounds) / row.density(da));
    }
    return in;
}

double Fluctuation::update(double q, double h) const
{
    if (method == EstimationMethod::onestep) return q;
    if (!logistic) return q + epsilon * h;
    const double span = y_hi - y_lo;
    const double s = std::clamp((q - y_lo) / span, 1e-5, 1.0 - 1e-5);
    const double eta = std::log(s / (1.0 - s)) + epsilon * h;
    return y_lo + span / (1.0 + std::exp(-eta));
}

Fluctuation fit_fluctuation(const TotalEffectInputs& in, bool bounded)
{
    Fluctuation fl;
    const std::size_t n = in.size();
    if (n == 0) throw EstimationError("no rows for the fluctuation");
    if (!bounded) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += in.h_obs[i] * (in.y[i] - in.q_obs[i]);
            den += in.h_obs[i] * in.h_obs[i];
        }
        if (!(den > 0.0) || !std::isfinite(num / den)) {
            fl.method = EstimationMethod::onestep;
            return fl;
        }
        fl.epsilon = num / den;
        return fl;
    }

    fl.logistic = true;
    fl.y_lo = *std::min_element(in.y.begin(), in.y.end());
    fl.y_hi = *std::max_element(in.y.begin(), in.y.end());
    if (!(fl.y_hi > fl.y_lo)) {
        fl.method = EstimationMethod::onestep;
        return fl;
    }
    const double span = fl.y_hi - fl.y_lo;
    std::vector<double> ys(n), off(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i] = (in.y[i] - fl.y_lo) / span;
        const double s = std::clamp((in.q_obs[i] - fl.y_lo) / span, 1e-5, 1.0 - 1e-5);
        off[i] = std::log(s / (1.0 - s));
    }
    double eps = 0.0;
    bool converged = false;
    for (int it = 0; it < 100 && !converged; ++it) {
        double score = 0.0, info = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-(off[i] + eps * in.h_obs[i])));
            score += in.h_obs[i] * (ys[i] - p);
            info += in.h_obs[i] * in.h_obs[i] * p * (1.0 - p);
        }
        if (!(info > 0.0)) break;
        const double step = score / info;
        eps += step;
        converged = std::abs(score) <= 1e-12 * static_cast<double>(n) || std::abs(step) <= 1e-14 * (1.0 + std::abs(eps));
    }
    if (!converged || !std::isfinite(eps)) {
        fl.method = EstimationMethod::onestep;
        return fl;
    }
    fl.epsilon = eps;
    return fl;
}

EffectEstimate total_effect(const TotalEffectInputs& in, const Fluctuation& fl, double alpha)
{
    const std::size_t n = in.size();
    if (n == 0) throw EstimationError("no rows for the total effect");
    const double nn = static_cast<double>(n);
    const double ybar = stats::mean(in.y);
    std::vector<double> resid(n), shifted(n);
    double mean_shift = 0.0, mean_resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        resid[i] = in.h_obs[i] * (in.y[i] - fl.update(in.q_obs[i], in.h_obs[i]));
        shifted[i] = fl.update(in.q_shift[i], in.h_shift[i]);
        mean_shift += shifted[i];
        mean_resid += resid[i];
    }
    mean_shift /= nn;
    mean_resid /= nn;
    double psi = mean_shift - ybar;
    if (fl.method == EstimationMethod::onestep) psi += mean_resid;
    std::vector<double> eif(n);
    for (std::size_t i = 0; i < n; ++i) {
        eif[i] = resid[i] - mean_resid + shifted[i] - mean_shift - (in.y[i] - ybar);
    }
    return make_estimate(EffectKind::te, fl.method, psi, std::move(eif), alpha);
}

EffectEstimate tmle_total_effect(const TotalEffectInputs& in, bool bounded_outcome, double alpha)
{
    return total_effect(in, fit_fluctuation(in, bounded_outcome), alpha);
}

double tmle_score(const TotalEffectInputs& in, const Fluctuation& fl)
{
    double s = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) s += in.h_obs[i] * (in.y[i] - fl.update(in.q_obs[i], in.h_obs[i]));
    return std::abs(s / static_cast<double>(in.size()));
}

EffectEstimate indirect_effect(const EffectEstimate& te, const EffectEstimate& nde, double alpha)
{
    if (te.eif.size() != nde.eif.size()) {
        throw ValidationError("total and direct effects are not computed on the same rows (" +
                              std::to_string(te.eif.size()) + " vs " + std::to_string(nde.eif.size()) + ")");
    }
    std::vector<double> eif(te.eif.size());
    for (std::size_t i = 0; i < eif.size(); ++i) eif[i] = te.eif[i] - nde.eif[i];
    auto out = make_estimate(EffectKind::nie, nde.method, te.psi - nde.psi, std::move(eif), alpha);
    out.fold = nde.fold;
    out.pathway = nde.pathway;
    out.delta = nde.delta;
    return out;
}

std::string estimates_csv(std::span<const EffectEstimate> estimates)
{
    std::ostringstream os;
    os << "psi,variance,se,lower_ci,upper_ci,p_value,fold,type,variables,n,delta\n";
    for (const auto& e : estimates) {
        os << format_double(e.psi) << ',' << format_double(e.variance) << ',' << format_double(e.se) << ','
           << format_double(e.ci_lower) << ',' << format_double(e.ci_upper) << ',' << format_double(e.p_value) << ','
           << e.fold << ',' << e.type() << ',' << e.pathway << ',' << e.n << ',' << format_double(e.delta) << '\n';
    }
    return os.str();
}

} // namespace pathmed
