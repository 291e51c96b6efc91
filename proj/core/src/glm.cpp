#include "learners_detail.hpp"

#include <pathmed/error.hpp>
#include <pathmed/rng.hpp>

#include <cmath>
#include <numeric>

namespace pathmed {
namespace detail {

namespace {

void check_finite(const Eigen::MatrixXd& B, const Eigen::VectorXd& y)
{
    if (!B.allFinite() || !y.allFinite()) throw ValidationError("regression inputs contain non-finite values");
}

LinearFit fit_gaussian(const Eigen::MatrixXd& D, const Eigen::VectorXd& y)
{
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
    Eigen::VectorXd beta;
    if (qr.rank() == D.cols()) {
        beta = qr.solve(y);
    } else {
        // Rank-deficient: tiny ridge on everything but the intercept.
        Eigen::MatrixXd G = D.transpose() * D;
        const double scale = G.diagonal().maxCoeff();
        for (Eigen::Index j = 1; j < G.cols(); ++j) G(j, j) += 1e-8 * std::max(scale, 1.0);
        beta = G.ldlt().solve(D.transpose() * y);
    }
    return {beta(0), beta.tail(beta.size() - 1)};
}

double log_lik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y)
{
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // log(1 + exp(eta)) without overflow
        const double e = eta(i);
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y(i) * e - softplus;
    }
    return ll;
}

LinearFit fit_binomial(const Eigen::MatrixXd& D, const Eigen::VectorXd& y, const GlmOptions& options)
{
    const double n = static_cast<double>(y.size());
    const double ones = y.sum();
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError("binomial response must be 0/1");
    }
    if (ones == 0.0 || ones == n) {
        throw EstimationError("binomial response is constant: complete separation, intercept diverges");
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(D.cols());
    beta(0) = std::log(ones / (n - ones));
    Eigen::VectorXd eta = D * beta;
    double ll = log_lik(eta, y);
    for (int iter = 0; iter < options.max_iter; ++iter) {
        Eigen::VectorXd p = (1.0 + (-eta.array()).exp()).inverse().matrix();
        Eigen::VectorXd grad = D.transpose() * (y - p) / n;
        if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tol) {
            if (beta.lpNorm<Eigen::Infinity>() > 1e4) break;
            return {beta(0), beta.tail(beta.size() - 1)};
        }
        Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
        Eigen::MatrixXd H = D.transpose() * w.asDiagonal() * D / n;
        H.diagonal().array() += 1e-12;
        Eigen::VectorXd step = H.ldlt().solve(grad);
        double t = 1.0;
        bool improved = false;
        for (int half = 0; half < 40; ++half, t *= 0.5) {
            Eigen::VectorXd cand = beta + t * step;
            Eigen::VectorXd cand_eta = D * cand;
            const double cand_ll = log_lik(cand_eta, y);
            if (cand_ll >= ll - 1e-12 * std::abs(ll)) {
                beta = std::move(cand);
                eta = std::move(cand_eta);
                ll = cand_ll;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    throw EstimationError("logistic regression did not converge (quasi-complete separation)");
}

} // namespace

LinearFit fit_linear(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, ResponseKind response,
                     const GlmOptions& options)
{
    check_finite(B, y);
    if (B.rows() != y.size()) throw ValidationError("design and response row counts differ");
    if (y.size() == 0) throw ValidationError("cannot fit a regression on zero rows");
    Eigen::MatrixXd D(B.rows(), B.cols() + 1);
    D.col(0).setOnes();
    D.rightCols(B.cols()) = B;
    return response == ResponseKind::gaussian ? fit_gaussian(D, y) : fit_binomial(D, y, options);
}

BasisModel refit_on_basis(BasisModel model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          ResponseKind response)
{
    const auto fit = fit_linear(model.basis_matrix(X), y, response);
    model.intercept = fit.intercept;
    for (std::size_t t = 0; t < model.terms.size(); ++t) model.terms[t].coef = fit.coef(static_cast<Eigen::Index>(t));
    model.response = response;
    return model;
}

std::vector<int> fold_labels(std::size_t n, int folds, std::uint64_t seed)
{
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = make_rng(seed, {0xC5});
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    std::vector<int> labels(n);
    for (std::size_t pos = 0; pos < n; ++pos) labels[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
    return labels;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& y, const std::vector<std::size_t>& rows)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
    return out;
}

} // namespace detail

BasisModel fit_glm(const Eigen::MatrixXd& X, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                   ResponseKind response, const GlmOptions& options)
{
    if (static_cast<Eigen::Index>(names.size()) != X.cols()) throw ValidationError("predictor names do not match columns");
    const auto fit = detail::fit_linear(X, y, response, options);
    BasisModel m;
    m.learner = "glm";
    m.predictors = names;
    m.intercept = fit.intercept;
    m.response = response;
    m.n_train = static_cast<std::size_t>(y.size());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        BasisTerm t;
        t.basis.kind = BasisKind::linear;
        t.basis.factors.push_back({static_cast<int>(j), 0.0, 1});
        t.coef = fit.coef(j);
        m.terms.push_back(std::move(t));
    }
    m.cv_risk = risk(response, y, m.predict(X));
    return m;
}

} // namespace pathmed
