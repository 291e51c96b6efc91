#include "learners_detail.hpp"

#include <pathmed/error.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

namespace pathmed {

std::string LearnerSpec::name() const
{
    switch (kind) {
    case LearnerKind::mean: return "mean";
    case LearnerKind::glm: return "glm";
    case LearnerKind::mars: return "mars";
    case LearnerKind::hal_lite: return "hal_lite";
    }
    return "unknown";
}

LearnerKind parse_learner(std::string_view name)
{
    if (name == "mean") return LearnerKind::mean;
    if (name == "glm") return LearnerKind::glm;
    if (name == "mars" || name == "earth") return LearnerKind::mars;
    if (name == "hal_lite" || name == "hal") return LearnerKind::hal_lite;
    throw ValidationError("unknown learner '" + std::string(name) + "' (expected mean, glm, mars or hal_lite)");
}

BasisModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                       const Eigen::VectorXd& y, ResponseKind response)
{
    switch (spec.kind) {
    case LearnerKind::mean: {
        if (static_cast<Eigen::Index>(names.size()) != X.cols()) throw ValidationError("predictor names do not match columns");
        const auto fit = detail::fit_linear(Eigen::MatrixXd(y.size(), 0), y, response);
        BasisModel m;
        m.learner = "mean";
        m.predictors = names;
        m.intercept = fit.intercept;
        m.response = response;
        m.n_train = static_cast<std::size_t>(y.size());
        m.cv_risk = risk(response, y, m.predict(X));
        return m;
    }
    case LearnerKind::glm: return fit_glm(X, names, y, response);
    case LearnerKind::mars: return fit_mars(X, names, y, spec.mars, response);
    case LearnerKind::hal_lite: return fit_hal_lite(X, names, y, spec.hal, response);
    }
    throw ValidationError("unknown learner kind");
}

double risk(ResponseKind response, const Eigen::VectorXd& y, const Eigen::VectorXd& pred)
{
    if (y.size() != pred.size()) throw ValidationError("risk: response and prediction lengths differ");
    if (y.size() == 0) return 0.0;
    if (response == ResponseKind::gaussian) return (y - pred).squaredNorm() / static_cast<double>(y.size());
    double nll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double p = std::clamp(pred(i), 1e-15, 1.0 - 1e-15);
        nll -= y(i) * std::log(p) + (1.0 - y(i)) * std::log1p(-p);
    }
    return nll / static_cast<double>(y.size());
}

CvSelection cv_select_detailed(std::span<const LearnerSpec> candidates, const Eigen::MatrixXd& X,
                               const std::vector<std::string>& names, const Eigen::VectorXd& y, ResponseKind response,
                               const CvOptions& options)
{
    if (candidates.empty()) throw ValidationError("cv_select needs at least one candidate learner");
    CvSelection out;
    if (candidates.size() == 1) {
        out.model = fit_learner(candidates[0], X, names, y, response);
        out.risks = {out.model.cv_risk};
        return out;
    }
    const auto n = static_cast<std::size_t>(y.size());
    if (options.folds < 2 || n < static_cast<std::size_t>(options.folds)) {
        throw ValidationError("cv_select needs at least one row per fold");
    }
    const auto labels = detail::fold_labels(n, options.folds, options.seed);
    std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(options.folds)),
        test(static_cast<std::size_t>(options.folds));
    for (std::size_t i = 0; i < n; ++i) {
        for (int f = 0; f < options.folds; ++f) (labels[i] == f ? test : train)[static_cast<std::size_t>(f)].push_back(i);
    }

    std::exception_ptr first_error;
    out.risks.assign(candidates.size(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        try {
            double total = 0.0;
            for (int f = 0; f < options.folds; ++f) {
                const auto& tr = train[static_cast<std::size_t>(f)];
                const auto& te = test[static_cast<std::size_t>(f)];
                const auto m = fit_learner(candidates[c], detail::take_rows(X, tr), names, detail::take_rows(y, tr), response);
                const Eigen::VectorXd yv = detail::take_rows(y, te);
                total += risk(response, yv, m.predict(detail::take_rows(X, te))) * static_cast<double>(te.size());
            }
            out.risks[c] = total / static_cast<double>(n);
        } catch (const std::exception&) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    const auto best = std::min_element(out.risks.begin(), out.risks.end());
    if (!std::isfinite(*best)) std::rethrow_exception(first_error);
    out.chosen = static_cast<std::size_t>(best - out.risks.begin());
    out.model = fit_learner(candidates[out.chosen], X, names, y, response);
    out.model.cv_risk = *best;
    return out;
}

BasisModel cv_select(std::span<const LearnerSpec> candidates, const Eigen::MatrixXd& X,
                     const std::vector<std::string>& names, const Eigen::VectorXd& y, ResponseKind response,
                     const CvOptions& options)
{
    return cv_select_detailed(candidates, X, names, y, response, options).model;
}

} // namespace pathmed
