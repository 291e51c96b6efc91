#include <pathmed/error.hpp>
#include <pathmed/learners.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace pathmed {

std::vector<FScore> anova_f_stats(const BasisModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  std::vector<std::string>* warnings)
{
    const Eigen::MatrixXd B = model.basis_matrix(X);
    const auto n = B.rows();
    if (y.size() != n) throw ValidationError("anova: response and design row counts differ");
    const double nn = static_cast<double>(n);

    // Sequential sums of squares: each column is orthogonalized against the
    // intercept and every earlier accepted column.
    Eigen::MatrixXd Q(n, B.cols() + 1);
    Q.col(0).setConstant(1.0 / std::sqrt(nn));
    Eigen::Index rank = 1;
    std::vector<double> ss(static_cast<std::size_t>(B.cols()), 0.0);
    std::vector<bool> collinear(static_cast<std::size_t>(B.cols()), false);
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
        Eigen::VectorXd c = B.col(j);
        const double norm0 = c.squaredNorm();
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index k = 0; k < rank; ++k) c -= Q.col(k).dot(c) * Q.col(k);
        }
        const double norm = c.squaredNorm();
        if (norm0 == 0.0 || norm <= 1e-10 * norm0) {
            collinear[static_cast<std::size_t>(j)] = true;
            if (warnings) {
                warnings->push_back("basis " + model.terms[static_cast<std::size_t>(j)].basis.label(model.predictors) +
                                    " is collinear with earlier terms; F set to 0");
            }
            continue;
        }
        c /= std::sqrt(norm);
        Q.col(rank++) = c;
        const double proj = c.dot(y);
        ss[static_cast<std::size_t>(j)] = proj * proj;
    }
    const double df_resid = nn - static_cast<double>(rank);
    if (df_resid <= 0) throw EstimationError("anova: no residual degrees of freedom");
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double tss = yc.squaredNorm();
    double explained = 0.0;
    for (double s : ss) explained += s;
    // An exact fit leaves rss = 0; a tiny floor keeps every F finite.
    const double rss = std::max(tss - explained, 1e-14 * std::max(tss, 1e-300));
    const double mse = rss / df_resid;

    std::vector<FScore> out;
    for (std::size_t j = 0; j < ss.size(); ++j) {
        FScore f;
        f.target = model.terms[j].basis.label(model.predictors);
        f.variables = model.terms[j].basis.variables(model.predictors);
        f.df_model = collinear[j] ? 0.0 : 1.0;
        f.df_resid = df_resid;
        f.f_stat = collinear[j] ? 0.0 : ss[j] / mse;
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<FScore> aggregate_f_by_variable(std::span<const FScore> scores)
{
    std::map<std::string, FScore> by_var;
    for (const auto& s : scores) {
        for (const auto& v : s.variables) {
            auto [it, fresh] = by_var.try_emplace(v);
            auto& agg = it->second;
            if (fresh) {
                agg.target = v;
                agg.variables = {v};
                agg.df_resid = s.df_resid;
            }
            agg.f_stat += s.f_stat;
            agg.df_model += s.df_model;
        }
    }
    std::vector<FScore> out;
    out.reserve(by_var.size());
    for (auto& [name, s] : by_var) out.push_back(std::move(s));
    std::stable_sort(out.begin(), out.end(), [](const FScore& a, const FScore& b) { return a.f_stat > b.f_stat; });
    return out;
}

} // namespace pathmed
