#include "json_detail.hpp"

#include <pathmed/density.hpp>
#include <pathmed/error.hpp>
#include <pathmed/stats.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace pathmed {

using namespace stats;

namespace {

BasisModel fit_mean(const Eigen::MatrixXd& X, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                    const DensityOptions& opt)
{
    if (names.empty()) {
        BasisModel m;
        m.learner = "intercept";
        m.intercept = y.mean();
        m.n_train = static_cast<std::size_t>(y.size());
        m.cv_risk = variance_pop({y.data(), static_cast<std::size_t>(y.size())});
        return m;
    }
    return cv_select(opt.library, X, names, y, ResponseKind::gaussian, opt.cv);
}

Eigen::VectorXd target_vector(const Dataset& data, const std::string& target)
{
    const auto v = data.values(target);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require_continuous(const Dataset& data, const std::string& target)
{
    if (data.column(target).kind.is_discrete()) {
        throw ValidationError("density target '" + target + "' is discrete; use the categorical form");
    }
}

ConditionalDensity base_density(const Dataset& data, const std::string& target,
                                const std::vector<std::string>& conditioners, const DensityOptions& opt)
{
    if (data.n() < 2) throw ValidationError("density fit needs at least two rows");
    if (!(opt.floor > 0.0) || opt.floor >= 1e-2) throw ValidationError("density floor must lie in (0, 0.01)");
    ConditionalDensity cd;
    cd.target = target;
    cd.conditioners = conditioners;
    cd.floor = opt.floor;
    const auto b = empirical_bounds(data.values(target));
    cd.support_min = b.lower;
    cd.support_max = b.upper;
    return cd;
}

double softmax_objective(const Eigen::MatrixXd& D, const std::vector<int>& y, const Eigen::MatrixXd& theta,
                         double ridge)
{
    const auto n = D.rows();
    const Eigen::MatrixXd eta = D * theta.transpose(); // n x (k-1)
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = std::max(0.0, eta.row(i).maxCoeff());
        double z = std::exp(-m);
        for (Eigen::Index c = 0; c < eta.cols(); ++c) z += std::exp(eta(i, c) - m);
        const int yi = y[static_cast<std::size_t>(i)];
        ll += (yi == 1 ? 0.0 : eta(i, yi - 2)) - m - std::log(z);
    }
    const double pen = theta.rightCols(theta.cols() - 1).squaredNorm();
    return ll / static_cast<double>(n) - 0.5 * ridge * pen;
}

} // namespace

std::string to_string(DensityForm form)
{
    switch (form) {
    case DensityForm::hose: return "hose";
    case DensityForm::hese: return "hese";
    case DensityForm::categorical_pmf: return "categorical_pmf";
    }
    return "?";
}

double DensityRow::density(double a) const
{
    if (form == DensityForm::categorical_pmf) {
        const double r = std::round(a);
        if (r != a || r < 1.0 || r > static_cast<double>(pmf.size())) return floor;
        return pmf[static_cast<std::size_t>(r) - 1];
    }
    return std::max(normal_pdf(a, mu, sigma), floor);
}

DensityRow ConditionalDensity::at(std::span<const double> x) const
{
    if (x.size() != conditioners.size()) {
        throw ValidationError("density for '" + target + "' expects " + std::to_string(conditioners.size()) +
                              " conditioners, got " + std::to_string(x.size()));
    }
    DensityRow row;
    row.form = form;
    row.floor = floor;
    switch (form) {
    case DensityForm::hose:
        row.mu = mean_model.predict(x);
        row.sigma = sigma;
        break;
    case DensityForm::hese:
        row.mu = mean_model.predict(x);
        row.sigma = std::exp(0.5 * (log_var_model.predict(x) - kLogChiSqBias));
        break;
    case DensityForm::categorical_pmf: {
        const auto k = static_cast<std::size_t>(n_classes);
        std::vector<double> eta(k, 0.0);
        for (std::size_t c = 1; c < k; ++c) {
            const auto r = static_cast<Eigen::Index>(c - 1);
            double e = logit_weights(r, 0);
            for (std::size_t j = 0; j < x.size(); ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                e += logit_weights(r, jj + 1) * (x[j] - x_center(jj)) / x_scale(jj);
            }
            eta[c] = e;
        }
        const double m = *std::max_element(eta.begin(), eta.end());
        double z = 0.0;
        for (auto& e : eta) z += (e = std::exp(e - m));
        row.pmf.resize(k);
        const double mass = 1.0 - static_cast<double>(k) * floor;
        for (std::size_t c = 0; c < k; ++c) row.pmf[c] = floor + mass * eta[c] / z;
        break;
    }
    }
    return row;
}

ConditionalDensity fit_hose(const Dataset& data, const std::string& target, const std::vector<std::string>& conditioners,
                            const DensityOptions& opt)
{
    require_continuous(data, target);
    auto cd = base_density(data, target, conditioners, opt);
    cd.form = DensityForm::hose;
    const Eigen::MatrixXd X = data.matrix(conditioners);
    const Eigen::VectorXd y = target_vector(data, target);
    cd.mean_model = fit_mean(X, conditioners, y, opt);
    const Eigen::VectorXd r = y - cd.mean_model.predict(X);
    const double sd = std::sqrt(r.squaredNorm() / static_cast<double>(y.size() - 1));
    const double scale = std::sqrt(variance_sample({y.data(), static_cast<std::size_t>(y.size())}));
    if (!(sd > 1e-10 * std::max(scale, 1e-300))) {
        throw EstimationError("density for '" + target + "' has zero residual variance (degenerate density)");
    }
    cd.sigma = sd;
    return cd;
}

ConditionalDensity fit_hese(const Dataset& data, const std::string& target, const std::vector<std::string>& conditioners,
                            const DensityOptions& opt)
{
    auto cd = fit_hose(data, target, conditioners, opt);
    cd.form = DensityForm::hese;
    const Eigen::MatrixXd X = data.matrix(conditioners);
    const Eigen::VectorXd y = target_vector(data, target);
    const Eigen::VectorXd r = y - cd.mean_model.predict(X);
    // Exact zero residuals would give log(0); floor relative to the pooled variance.
    const double tiny = 1e-8 * cd.sigma * cd.sigma;
    const Eigen::VectorXd logr2 = r.array().square().max(tiny).log();
    cd.log_var_model = fit_mean(X, conditioners, logr2, opt);
    return cd;
}

ConditionalDensity fit_categorical_pmf(const Dataset& data, const std::string& target,
                                       const std::vector<std::string>& conditioners, const DensityOptions& opt)
{
    const auto& col = data.column(target);
    if (!col.kind.is_discrete()) {
        throw ValidationError("categorical density target '" + target + "' must be categorical or quantized");
    }
    auto cd = base_density(data, target, conditioners, opt);
    cd.form = DensityForm::categorical_pmf;
    const int k = col.kind.levels;
    if (k < 2) throw ValidationError("categorical density needs at least two classes");
    if (static_cast<double>(k) * opt.floor >= 1.0) throw ValidationError("density floor too large for class count");
    cd.n_classes = k;

    const auto n = data.n();
    std::vector<int> y(n);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int code = static_cast<int>(col.values[i]);
        y[i] = code;
        ++counts[static_cast<std::size_t>(code - 1)];
    }
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] < static_cast<std::size_t>(opt.min_class_count)) {
            throw ValidationError("class " + std::to_string(c + 1) + " of '" + target + "' is observed " +
                                  std::to_string(counts[static_cast<std::size_t>(c)]) + " times; at least " +
                                  std::to_string(opt.min_class_count) + " required (reduce n_bins)");
        }
    }

    const Eigen::MatrixXd X = data.matrix(conditioners);
    const auto p = X.cols();
    cd.x_center = X.colwise().mean().transpose();
    cd.x_scale = Eigen::VectorXd::Ones(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double sd = std::sqrt((X.col(j).array() - cd.x_center(j)).square().mean());
        if (sd > 0) cd.x_scale(j) = sd;
    }
    Eigen::MatrixXd D(static_cast<Eigen::Index>(n), p + 1);
    D.col(0).setOnes();
    for (Eigen::Index j = 0; j < p; ++j) D.col(j + 1) = (X.col(j).array() - cd.x_center(j)) / cd.x_scale(j);

    const auto km1 = static_cast<Eigen::Index>(k - 1);
    const auto q = p + 1;
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(km1, q);
    for (Eigen::Index c = 0; c < km1; ++c) {
        theta(c, 0) = std::log(static_cast<double>(counts[static_cast<std::size_t>(c + 1)]) / static_cast<double>(counts[0]));
    }
    const double nn = static_cast<double>(n);
    double obj = softmax_objective(D, y, theta, opt.ridge);
    bool converged = false;
    for (int iter = 0; iter < 200; ++iter) {
        const Eigen::MatrixXd eta = D * theta.transpose();
        Eigen::MatrixXd P(static_cast<Eigen::Index>(n), km1);
        for (Eigen::Index i = 0; i < eta.rows(); ++i) {
            const double m = std::max(0.0, eta.row(i).maxCoeff());
            double z = std::exp(-m);
            for (Eigen::Index c = 0; c < km1; ++c) z += (P(i, c) = std::exp(eta(i, c) - m));
            P.row(i) /= z;
        }
        Eigen::MatrixXd Yind = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), km1);
        for (std::size_t i = 0; i < n; ++i) {
            if (y[i] > 1) Yind(static_cast<Eigen::Index>(i), y[i] - 2) = 1.0;
        }
        Eigen::MatrixXd G = (Yind - P).transpose() * D / nn; // (k-1) x q
        G.rightCols(q - 1) -= opt.ridge * theta.rightCols(q - 1);
        if (G.lpNorm<Eigen::Infinity>() < 1e-10) {
            converged = true;
            break;
        }
        // Negative Hessian of the penalized average log-likelihood.
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(km1 * q, km1 * q);
        for (Eigen::Index c = 0; c < km1; ++c) {
            for (Eigen::Index c2 = c; c2 < km1; ++c2) {
                Eigen::VectorXd w = -(P.col(c).array() * P.col(c2).array()).matrix();
                if (c == c2) w += P.col(c);
                const Eigen::MatrixXd block = D.transpose() * w.asDiagonal() * D / nn;
                H.block(c * q, c2 * q, q, q) = block;
                H.block(c2 * q, c * q, q, q) = block.transpose();
            }
            for (Eigen::Index j = 1; j < q; ++j) H(c * q + j, c * q + j) += opt.ridge;
        }
        Eigen::VectorXd g(km1 * q);
        for (Eigen::Index c = 0; c < km1; ++c) g.segment(c * q, q) = G.row(c).transpose();
        H.diagonal().array() += 1e-12;
        const Eigen::VectorXd step = H.ldlt().solve(g);
        double t = 1.0;
        bool improved = false;
        for (int half = 0; half < 50; ++half, t *= 0.5) {
            Eigen::MatrixXd cand = theta;
            for (Eigen::Index c = 0; c < km1; ++c) cand.row(c) += t * step.segment(c * q, q).transpose();
            const double cobj = softmax_objective(D, y, cand, opt.ridge);
            if (cobj >= obj - 1e-15 * std::abs(obj)) {
                theta = std::move(cand);
                obj = cobj;
                improved = true;
                break;
            }
        }
        if (!improved) {
            converged = true;
            break;
        }
    }
    if (!converged) throw EstimationError("softmax regression for '" + target + "' did not converge");
    cd.logit_weights = theta;
    return cd;
}

ConditionalDensity fit_density(const Dataset& data, const std::string& target,
                               const std::vector<std::string>& conditioners, const DensityOptions& options,
                               bool heteroscedastic)
{
    const auto& kind = data.column(target).kind;
    if (kind.kind == Kind::binary) {
        throw ValidationError("density target '" + target + "' is binary; declare it categorical:2 with codes 1 and 2");
    }
    if (kind.is_discrete()) return fit_categorical_pmf(data, target, conditioners, options);
    return heteroscedastic ? fit_hese(data, target, conditioners, options) : fit_hose(data, target, conditioners, options);
}

double eval_density(const ConditionalDensity& cd, double a, std::span<const double> x)
{
    return cd.at(x).density(a);
}

double shifted_density(const DensityRow& row, double a, const ShiftSpec& spec, Bounds bounds)
{
    if (spec.delta == 0.0) return row.density(a);
    if (row.form == DensityForm::categorical_pmf) {
        const double r = std::round(a);
        if (r != a || r < 1.0 || r > static_cast<double>(row.pmf.size())) return row.floor;
        double mass = 0.0;
        for (std::size_t c = 1; c <= row.pmf.size(); ++c) {
            if (apply_shift(static_cast<double>(c), spec, bounds) == a) mass += row.pmf[c - 1];
        }
        return std::max(mass, row.floor);
    }
    const double d = spec.delta;
    double v = 0.0;
    if (spec.direction == ShiftDirection::up) {
        if (a < bounds.upper) v += normal_pdf(a - d, row.mu, row.sigma);
        if (a >= bounds.upper - d) v += normal_pdf(a, row.mu, row.sigma);
    } else {
        if (a > bounds.lower) v += normal_pdf(a + d, row.mu, row.sigma);
        if (a <= bounds.lower + d) v += normal_pdf(a, row.mu, row.sigma);
    }
    return std::max(v, row.floor);
}

double eval_shifted(const ConditionalDensity& cd, double a, std::span<const double> x, const ShiftSpec& spec,
                    Bounds bounds)
{
    return shifted_density(cd.at(x), a, spec, bounds);
}

double eval_at_shift(const ConditionalDensity& cd, double a, std::span<const double> x, const ShiftSpec& spec,
                     Bounds bounds)
{
    return cd.at(x).density(apply_shift(a, spec, bounds));
}

double density_ratio(const ConditionalDensity& cd, double a, std::span<const double> x, const ShiftSpec& spec,
                     Bounds bounds)
{
    const auto row = cd.at(x);
    return shifted_density(row, a, spec, bounds) / row.density(a);
}

Bounds shift_bounds(const ConditionalDensity& cd)
{
    if (cd.discrete()) return {1.0, static_cast<double>(cd.n_classes)};
    return {cd.support_min, cd.support_max};
}

std::string ConditionalDensity::to_json() const
{
    nlohmann::json j{{"target", target},
                     {"conditioners", conditioners},
                     {"form", pathmed::to_string(form)},
                     {"floor", floor},
                     {"support", {support_min, support_max}}};
    if (form == DensityForm::categorical_pmf) {
        j["n_classes"] = n_classes;
        std::vector<std::vector<double>> w;
        for (Eigen::Index r = 0; r < logit_weights.rows(); ++r) {
            w.emplace_back();
            for (Eigen::Index c = 0; c < logit_weights.cols(); ++c) w.back().push_back(logit_weights(r, c));
        }
        j["logit_weights"] = w;
        j["x_center"] = std::vector<double>(x_center.data(), x_center.data() + x_center.size());
        j["x_scale"] = std::vector<double>(x_scale.data(), x_scale.data() + x_scale.size());
    } else {
        j["mean_model"] = detail::model_to_json(mean_model);
        j["sigma"] = sigma;
        if (form == DensityForm::hese) j["log_var_model"] = detail::model_to_json(log_var_model);
    }
    return j.dump();
}

ConditionalDensity ConditionalDensity::from_json(std::string_view text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        ConditionalDensity cd;
        cd.target = j.at("target").get<std::string>();
        cd.conditioners = j.at("conditioners").get<std::vector<std::string>>();
        const auto form = j.at("form").get<std::string>();
        if (form == "hose") cd.form = DensityForm::hose;
        else if (form == "hese") cd.form = DensityForm::hese;
        else if (form == "categorical_pmf") cd.form = DensityForm::categorical_pmf;
        else throw ValidationError("unknown density form '" + form + "'");
        cd.floor = j.at("floor").get<double>();
        cd.support_min = j.at("support").at(0).get<double>();
        cd.support_max = j.at("support").at(1).get<double>();
        if (cd.form == DensityForm::categorical_pmf) {
            cd.n_classes = j.at("n_classes").get<int>();
            const auto w = j.at("logit_weights").get<std::vector<std::vector<double>>>();
            const auto cols = static_cast<Eigen::Index>(cd.conditioners.size() + 1);
            cd.logit_weights.resize(static_cast<Eigen::Index>(w.size()), cols);
            for (std::size_t r = 0; r < w.size(); ++r) {
                if (static_cast<Eigen::Index>(w[r].size()) != cols) throw ValidationError("malformed logit weights");
                for (Eigen::Index c = 0; c < cols; ++c) cd.logit_weights(static_cast<Eigen::Index>(r), c) = w[r][static_cast<std::size_t>(c)];
            }
            const auto xc = j.at("x_center").get<std::vector<double>>();
            const auto xs = j.at("x_scale").get<std::vector<double>>();
            cd.x_center = Eigen::Map<const Eigen::VectorXd>(xc.data(), static_cast<Eigen::Index>(xc.size()));
            cd.x_scale = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        } else {
            cd.mean_model = detail::model_from_json(j.at("mean_model"));
            cd.sigma = j.at("sigma").get<double>();
            if (cd.form == DensityForm::hese) cd.log_var_model = detail::model_from_json(j.at("log_var_model"));
        }
        return cd;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid density JSON: ") + e.what());
    }
}

} // namespace pathmed
