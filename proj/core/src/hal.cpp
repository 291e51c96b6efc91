#include "learners_detail.hpp"

#include <pathmed/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pathmed {

namespace {

double soft_threshold(double z, double gamma)
{
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

/// Distinct quantile knots of a column, excluding its maximum (where the
/// indicator would be constant).
std::vector<double> indicator_knots(const Eigen::VectorXd& x, int max_knots)
{
    std::vector<double> v(x.data(), x.data() + x.size());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (v.size() < 2) return {};
    std::vector<double> knots;
    const std::size_t distinct = v.size() - 1;
    if (distinct <= static_cast<std::size_t>(max_knots)) {
        knots.assign(v.begin(), v.end() - 1);
        return knots;
    }
    for (int j = 0; j < max_knots; ++j) {
        const auto pos = static_cast<std::size_t>(std::floor((j + 0.5) * static_cast<double>(distinct) / max_knots));
        const double t = v[std::min(pos, distinct - 1)];
        if (knots.empty() || t != knots.back()) knots.push_back(t);
    }
    return knots;
}

Eigen::MatrixXd design(const std::vector<BasisFunction>& bases, const Eigen::MatrixXd& X)
{
    Eigen::MatrixXd B(X.rows(), static_cast<Eigen::Index>(bases.size()));
    for (std::size_t s = 0; s < bases.size(); ++s) {
        auto col = B.col(static_cast<Eigen::Index>(s));
        col.setOnes();
        for (const auto& f : bases[s].factors) col.array() *= (X.col(f.column).array() <= f.knot).cast<double>();
    }
    return B;
}

} // namespace

double lasso_objective(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, double lambda, double intercept,
                       const Eigen::VectorXd& beta)
{
    const Eigen::VectorXd r = (y - B * beta).array() - intercept;
    return r.squaredNorm() / (2.0 * static_cast<double>(y.size())) + lambda * beta.lpNorm<1>();
}

LassoResult lasso_cd(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, double lambda, const LassoOptions& opt,
                     const Eigen::VectorXd* warm_start)
{
    if (B.rows() != y.size()) throw ValidationError("lasso design and response row counts differ");
    if (lambda < 0) throw ValidationError("lasso lambda must be non-negative");
    const auto n = B.rows();
    const auto p = B.cols();
    const double nn = static_cast<double>(n);

    const Eigen::RowVectorXd mu = B.colwise().mean();
    const double ybar = y.mean();
    const Eigen::MatrixXd C = B.rowwise() - mu;
    const Eigen::VectorXd yc = y.array() - ybar;
    const Eigen::VectorXd z = C.colwise().squaredNorm().transpose() / nn;

    LassoResult res;
    res.beta = warm_start && warm_start->size() == p ? *warm_start : Eigen::VectorXd::Zero(p);
    Eigen::VectorXd r = yc - C * res.beta;
    const double scale = std::max(yc.squaredNorm() / nn, 1e-300);

    auto objective = [&] { return r.squaredNorm() / (2.0 * nn) + lambda * res.beta.lpNorm<1>(); };

    auto sweep = [&](bool full) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (z(j) <= 0.0) continue;
            const double old = res.beta(j);
            if (!full && old == 0.0) continue;
            const double rho = C.col(j).dot(r) / nn + z(j) * old;
            const double next = soft_threshold(rho, lambda) / z(j);
            if (next != old) {
                r.noalias() -= (next - old) * C.col(j);
                res.beta(j) = next;
                max_change = std::max(max_change, z(j) * (next - old) * (next - old));
            }
        }
        ++res.sweeps;
        if (opt.record_objective) res.objective_trace.push_back(objective());
        return max_change;
    };

    while (res.sweeps < opt.max_sweeps) {
        const double full_change = sweep(true);
        if (full_change <= opt.tol * scale) break;
        while (res.sweeps < opt.max_sweeps) {
            if (sweep(false) <= opt.tol * scale) break;
        }
    }
    res.intercept = ybar - mu.dot(res.beta);
    return res;
}

std::vector<BasisFunction> hal_bases(const Eigen::MatrixXd& X, const HalOptions& opt)
{
    if (opt.max_degree < 1 || opt.max_degree > 2) throw ValidationError("HAL-lite supports max_degree 1 or 2");
    if (opt.max_knots < 1 || opt.interaction_knots < 1) throw ValidationError("HAL-lite needs at least one knot");
    if (X.cols() > 25) throw ValidationError("HAL-lite accepts at most 25 predictor columns");
    const auto p = static_cast<int>(X.cols());
    std::vector<std::vector<double>> main(static_cast<std::size_t>(p)), inter(static_cast<std::size_t>(p));
    std::size_t count = 0;
    for (int j = 0; j < p; ++j) {
        main[static_cast<std::size_t>(j)] = indicator_knots(X.col(j), opt.max_knots);
        count += main[static_cast<std::size_t>(j)].size();
        if (opt.max_degree == 2) inter[static_cast<std::size_t>(j)] = indicator_knots(X.col(j), opt.interaction_knots);
    }
    if (opt.max_degree == 2) {
        for (int j = 0; j < p; ++j) {
            for (int k = j + 1; k < p; ++k) count += inter[static_cast<std::size_t>(j)].size() * inter[static_cast<std::size_t>(k)].size();
        }
    }
    if (count > opt.max_bases) {
        throw ValidationError("HAL-lite basis has " + std::to_string(count) + " functions, above the limit of " +
                              std::to_string(opt.max_bases) + "; reduce max_degree or the knot counts");
    }
    std::vector<BasisFunction> bases;
    bases.reserve(count);
    for (int j = 0; j < p; ++j) {
        for (double t : main[static_cast<std::size_t>(j)]) bases.push_back({BasisKind::indicator, {{j, t, 1}}});
    }
    if (opt.max_degree == 2) {
        for (int j = 0; j < p; ++j) {
            for (int k = j + 1; k < p; ++k) {
                for (double tj : inter[static_cast<std::size_t>(j)]) {
                    for (double tk : inter[static_cast<std::size_t>(k)]) {
                        bases.push_back({BasisKind::indicator, {{j, tj, 1}, {k, tk, 1}}});
                    }
                }
            }
        }
    }
    return bases;
}

HalFit fit_hal_lite_detailed(const Eigen::MatrixXd& X, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                             const HalOptions& opt)
{
    if (static_cast<Eigen::Index>(names.size()) != X.cols()) throw ValidationError("predictor names do not match columns");
    if (!X.allFinite() || !y.allFinite()) throw ValidationError("HAL-lite inputs contain non-finite values");
    const auto n = static_cast<std::size_t>(X.rows());
    if (opt.cv_folds < 2 || n < static_cast<std::size_t>(2 * opt.cv_folds)) {
        throw ValidationError("HAL-lite needs at least two rows per CV fold");
    }
    HalFit fit;
    fit.bases = hal_bases(X, opt);
    const Eigen::MatrixXd B = design(fit.bases, X);
    const double nn = static_cast<double>(n);

    fit.lambda_grid = opt.lambda_grid;
    if (fit.lambda_grid.empty()) {
        const Eigen::VectorXd yc = y.array() - y.mean();
        const Eigen::MatrixXd C = B.rowwise() - B.colwise().mean();
        const double lmax = B.cols() > 0 ? (C.transpose() * yc).cwiseAbs().maxCoeff() / nn : 0.0;
        if (lmax > 0.0) {
            const int k = std::max(opt.n_lambda, 1);
            for (int i = 0; i < k; ++i) {
                const double frac = k == 1 ? 0.0 : static_cast<double>(i) / (k - 1);
                fit.lambda_grid.push_back(lmax * std::pow(opt.lambda_min_ratio, frac));
            }
        }
    }
    std::sort(fit.lambda_grid.begin(), fit.lambda_grid.end(), std::greater<>());

    BasisModel model;
    model.learner = "hal_lite";
    model.predictors = names;
    model.response = ResponseKind::gaussian;
    model.n_train = n;
    model.intercept = y.mean();
    if (fit.lambda_grid.empty()) {
        model.cv_risk = risk(ResponseKind::gaussian, y, model.predict(X));
        fit.model = std::move(model);
        return fit;
    }

    const auto labels = detail::fold_labels(n, opt.cv_folds, opt.seed);
    const std::size_t L = fit.lambda_grid.size();
    fit.cv_mse.assign(L, 0.0);
    LassoOptions lo;
    lo.tol = 1e-9;
    for (int f = 0; f < opt.cv_folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (labels[i] == f ? test : train).push_back(i);
        const Eigen::MatrixXd Bt = detail::take_rows(B, train);
        const Eigen::VectorXd yt = detail::take_rows(y, train);
        const Eigen::MatrixXd Bv = detail::take_rows(B, test);
        const Eigen::VectorXd yv = detail::take_rows(y, test);
        Eigen::VectorXd warm = Eigen::VectorXd::Zero(B.cols());
        for (std::size_t l = 0; l < L; ++l) {
            const auto res = lasso_cd(Bt, yt, fit.lambda_grid[l], lo, &warm);
            warm = res.beta;
            const Eigen::VectorXd pred = (Bv * res.beta).array() + res.intercept;
            fit.cv_mse[l] += (yv - pred).squaredNorm() / nn;
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fit.cv_mse.begin(), fit.cv_mse.end()) - fit.cv_mse.begin());
    fit.lambda = fit.lambda_grid[best];

    Eigen::VectorXd warm = Eigen::VectorXd::Zero(B.cols());
    LassoResult res;
    for (std::size_t l = 0; l <= best; ++l) {
        res = lasso_cd(B, y, fit.lambda_grid[l], lo, &warm);
        warm = res.beta;
    }
    model.intercept = res.intercept;
    for (Eigen::Index s = 0; s < res.beta.size(); ++s) {
        if (res.beta(s) != 0.0) model.terms.push_back({fit.bases[static_cast<std::size_t>(s)], res.beta(s)});
    }
    model.cv_risk = fit.cv_mse[best];
    fit.model = std::move(model);
    return fit;
}

BasisModel fit_hal_lite(const Eigen::MatrixXd& X, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                        const HalOptions& options, ResponseKind response)
{
    auto model = fit_hal_lite_detailed(X, names, y, options).model;
    if (response == ResponseKind::binomial) {
        model = detail::refit_on_basis(std::move(model), X, y, response);
        model.cv_risk = risk(response, y, model.predict(X));
    }
    return model;
}

} // namespace pathmed
