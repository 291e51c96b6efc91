#include "learners_detail.hpp"

#include <pathmed/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pathmed {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ForwardTerm {
    BasisFunction basis;
    Eigen::VectorXd column;
    std::vector<int> vars;
};

struct Candidate {
    double gain = 0.0;
    int parent = -1;
    int var = -1;
    double knot = 0.0;
    bool plus = false;
    bool minus = false;
};

std::vector<double> knot_candidates(const std::vector<double>& sorted, int max_knots)
{
    std::vector<double> knots{sorted.front()};
    const std::size_t n = sorted.size();
    for (int j = 1; j <= max_knots; ++j) {
        const auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(j) * static_cast<double>(n - 1) /
                                                               static_cast<double>(max_knots + 1)));
        const double t = sorted[pos];
        if (t > sorted.front() && t < sorted.back() && t != knots.back()) knots.push_back(t);
    }
    return knots;
}

double gcv_value(double rss, std::size_t n, int nterms, double penalty)
{
    const double c = nterms + penalty * (nterms - 1) / 2.0;
    const double nn = static_cast<double>(n);
    if (c >= nn) return std::numeric_limits<double>::infinity();
    const double denom = 1.0 - c / nn;
    return rss / nn / (denom * denom);
}

/// Residual sum of squares of y on the columns of B flagged in `keep`.
double subset_rss(const Eigen::MatrixXd& G, const Eigen::VectorXd& by, double yy, const std::vector<bool>& keep)
{
    std::vector<Eigen::Index> idx;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        if (keep[j]) idx.push_back(static_cast<Eigen::Index>(j));
    }
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd Gs(m, m);
    Eigen::VectorXd bs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        bs(a) = by(idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < m; ++b) Gs(a, b) = G(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    for (Eigen::Index a = 0; a < m; ++a) Gs(a, a) += 1e-10 * std::max(Gs(a, a), 1e-300);
    const Eigen::VectorXd beta = Gs.ldlt().solve(bs);
    return std::max(0.0, yy - bs.dot(beta));
}

} // namespace

MarsFit fit_mars_detailed(const Eigen::MatrixXd& X, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                          const MarsOptions& opt)
{
    const auto n = static_cast<std::size_t>(X.rows());
    const auto p = static_cast<int>(X.cols());
    if (static_cast<int>(names.size()) != p) throw ValidationError("predictor names do not match columns");
    if (n < 10) throw ValidationError("MARS needs at least 10 rows for the knot search");
    if (opt.max_degree < 1 || opt.max_degree > 3) throw ValidationError("MARS max_degree must be 1, 2 or 3");
    if (opt.max_terms < 2) throw ValidationError("MARS max_terms must be at least 2");
    if (!X.allFinite() || !y.allFinite()) throw ValidationError("MARS inputs contain non-finite values");

    const double nn = static_cast<double>(n);
    const double ybar = y.mean();

    // Per-variable centering keeps the prefix-sum expansions well conditioned.
    std::vector<double> centre(static_cast<std::size_t>(p));
    std::vector<std::vector<std::size_t>> order(static_cast<std::size_t>(p));
    std::vector<std::vector<double>> knots(static_cast<std::size_t>(p));
    for (int v = 0; v < p; ++v) {
        const auto vi = static_cast<std::size_t>(v);
        centre[vi] = X.col(v).mean();
        auto& ord = order[vi];
        ord.resize(n);
        std::iota(ord.begin(), ord.end(), std::size_t{0});
        std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
            return X(static_cast<Eigen::Index>(a), v) < X(static_cast<Eigen::Index>(b), v);
        });
        std::vector<double> sorted(n);
        for (std::size_t i = 0; i < n; ++i) sorted[i] = X(static_cast<Eigen::Index>(ord[i]), v);
        if (sorted.front() < sorted.back()) knots[vi] = knot_candidates(sorted, opt.max_knots);
    }

    const auto max_terms = static_cast<Eigen::Index>(opt.max_terms);
    RowMatrix Q = RowMatrix::Zero(static_cast<Eigen::Index>(n), max_terms);
    Q.col(0).setConstant(1.0 / std::sqrt(nn));
    Eigen::Index M = 1;

    std::vector<ForwardTerm> terms;
    terms.push_back({BasisFunction{BasisKind::hinge, {}}, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)), {}});

    Eigen::VectorXd r = y.array() - ybar;
    const double tss = r.squaredNorm();

    auto append_column = [&](Eigen::VectorXd c) -> bool {
        const double norm0 = c.squaredNorm();
        if (norm0 <= 0.0) return false;
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index k = 0; k < M; ++k) c -= Q.col(k).dot(c) * Q.col(k);
        }
        const double norm = c.squaredNorm();
        if (norm <= 1e-10 * norm0) return false;
        c /= std::sqrt(norm);
        Q.col(M) = c;
        r -= c.dot(r) * c;
        ++M;
        return true;
    };

    // Each side of a new hinge must cover enough rows of its parent's support;
    // otherwise interaction terms chase single points.
    const std::size_t span = opt.min_span > 0
                                 ? static_cast<std::size_t>(opt.min_span)
                                 : static_cast<std::size_t>(std::ceil(3.0 - std::log2(0.05 / static_cast<double>(p))));

    Eigen::VectorXd s0tot(max_terms), s1tot(max_terms), s0pre(max_terms), s1pre(max_terms);
    Eigen::VectorXd qplus(max_terms), qminus(max_terms);

    while (tss > 0.0 && M < max_terms) {
        const double rss = r.squaredNorm();
        if (rss <= opt.threshold * tss) break;
        const bool pair_fits = M + 2 <= max_terms;
        Candidate best;
        for (std::size_t m = 0; m < terms.size(); ++m) {
            const auto& parent = terms[m];
            if (static_cast<int>(parent.vars.size()) >= opt.max_degree) continue;
            const auto& b = parent.column;
            for (int v = 0; v < p; ++v) {
                const auto vi = static_cast<std::size_t>(v);
                if (knots[vi].empty()) continue;
                if (std::find(parent.vars.begin(), parent.vars.end(), v) != parent.vars.end()) continue;
                const auto& ord = order[vi];
                const double cx = centre[vi];

                auto s0 = s0tot.head(M), s1 = s1tot.head(M);
                s0.setZero();
                s1.setZero();
                double r0 = 0, r1 = 0, t0 = 0, t1 = 0, t2 = 0;
                std::size_t support = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const auto ii = static_cast<Eigen::Index>(i);
                    const double bi = b(ii);
                    if (bi == 0.0) continue;
                    ++support;
                    const double x = X(ii, v) - cx;
                    s0.noalias() += bi * Q.row(ii).head(M).transpose();
                    s1.noalias() += (bi * x) * Q.row(ii).head(M).transpose();
                    r0 += bi * r(ii);
                    r1 += bi * r(ii) * x;
                    t0 += bi * bi;
                    t1 += bi * bi * x;
                    t2 += bi * bi * x * x;
                }
                if (t0 == 0.0) continue;

                auto p0 = s0pre.head(M), p1 = s1pre.head(M);
                p0.setZero();
                p1.setZero();
                double pr0 = 0, pr1 = 0, pt0 = 0, pt1 = 0, pt2 = 0;
                std::size_t j = 0, below = 0;
                for (double knot : knots[vi]) {
                    const double t = knot - cx;
                    while (j < n && X(static_cast<Eigen::Index>(ord[j]), v) <= knot) {
                        const auto ii = static_cast<Eigen::Index>(ord[j]);
                        const double bi = b(ii);
                        if (bi != 0.0) {
                            ++below;
                            const double x = X(ii, v) - cx;
                            p0.noalias() += bi * Q.row(ii).head(M).transpose();
                            p1.noalias() += (bi * x) * Q.row(ii).head(M).transpose();
                            pr0 += bi * r(ii);
                            pr1 += bi * r(ii) * x;
                            pt0 += bi * bi;
                            pt1 += bi * bi * x;
                            pt2 += bi * bi * x * x;
                        }
                        ++j;
                    }
                    auto qp = qplus.head(M), qm = qminus.head(M);
                    qp = (s1 - p1) - t * (s0 - p0);
                    qm = t * p0 - p1;
                    const double rp = (r1 - pr1) - t * (r0 - pr0);
                    const double rm = t * pr0 - pr1;
                    const double cp = (t2 - pt2) - 2 * t * (t1 - pt1) + t * t * (t0 - pt0);
                    const double cm = t * t * pt0 - 2 * t * pt1 + pt2;
                    const double a = cp - qp.squaredNorm();
                    const double d = cm - qm.squaredNorm();
                    const bool ok_p = cp > 0 && a > 1e-8 * cp && support - below >= span;
                    const bool ok_m = cm > 0 && d > 1e-8 * cm && below >= span;

                    Candidate c{0.0, static_cast<int>(m), v, knot, false, false};
                    if (ok_p && ok_m && pair_fits) {
                        const double bb = -qp.dot(qm);
                        const double det = a * d - bb * bb;
                        if (det > 1e-8 * a * d) {
                            c.gain = (d * rp * rp - 2 * bb * rp * rm + a * rm * rm) / det;
                            c.plus = c.minus = true;
                        } else {
                            c.gain = rp * rp / a;
                            c.plus = true;
                        }
                    } else if (ok_p) {
                        c.gain = rp * rp / a;
                        c.plus = true;
                    } else if (ok_m) {
                        c.gain = rm * rm / d;
                        c.minus = true;
                    }
                    if (c.gain > best.gain) best = c;
                }
            }
        }
        if (best.parent < 0 || best.gain < opt.threshold * tss) break;

        const auto& parent = terms[static_cast<std::size_t>(best.parent)];
        const Eigen::VectorXd xv = X.col(best.var);
        auto make_term = [&](int sign) {
            ForwardTerm t;
            t.basis.kind = BasisKind::hinge;
            t.basis.factors = parent.basis.factors;
            t.basis.factors.push_back({best.var, best.knot, sign});
            t.vars = parent.vars;
            t.vars.push_back(best.var);
            t.column = parent.column.array() * (sign * (xv.array() - best.knot)).max(0.0);
            return t;
        };
        std::vector<ForwardTerm> added;
        if (best.plus) added.push_back(make_term(+1));
        if (best.minus) added.push_back(make_term(-1));
        const double before = r.squaredNorm();
        for (auto& t : added) {
            if (M < max_terms && append_column(t.column)) terms.push_back(std::move(t));
        }
        if (before - r.squaredNorm() < opt.threshold * tss) break;
    }

    // Backward pass: greedy deletion, keep the subset with the lowest GCV.
    const auto nt = static_cast<Eigen::Index>(terms.size());
    Eigen::MatrixXd B(static_cast<Eigen::Index>(n), nt);
    for (Eigen::Index j = 0; j < nt; ++j) B.col(j) = terms[static_cast<std::size_t>(j)].column;
    const Eigen::MatrixXd G = B.transpose() * B;
    const Eigen::VectorXd by = B.transpose() * y;
    const double yy = y.squaredNorm();

    std::vector<bool> keep(static_cast<std::size_t>(nt), true);
    int size = static_cast<int>(nt);
    double rss_full = subset_rss(G, by, yy, keep);
    MarsFit fit;
    fit.forward_terms = size;
    fit.forward_gcv = gcv_value(rss_full, n, size, opt.penalty);
    fit.gcv_path.push_back(fit.forward_gcv);
    std::vector<bool> best_keep = keep;
    double best_gcv = fit.forward_gcv;
    while (size > 1) {
        double best_rss = std::numeric_limits<double>::infinity();
        std::size_t drop = 0;
        for (std::size_t j = 1; j < keep.size(); ++j) {
            if (!keep[j]) continue;
            keep[j] = false;
            const double rss = subset_rss(G, by, yy, keep);
            keep[j] = true;
            if (rss < best_rss) {
                best_rss = rss;
                drop = j;
            }
        }
        keep[drop] = false;
        --size;
        const double g = gcv_value(best_rss, n, size, opt.penalty);
        fit.gcv_path.push_back(g);
        if (g <= best_gcv) {
            best_gcv = g;
            best_keep = keep;
        }
    }
    fit.selected_gcv = best_gcv;

    BasisModel model;
    model.learner = "mars";
    model.predictors = names;
    model.response = ResponseKind::gaussian;
    model.n_train = n;
    std::vector<Eigen::Index> chosen;
    for (std::size_t j = 1; j < best_keep.size(); ++j) {
        if (best_keep[j]) chosen.push_back(static_cast<Eigen::Index>(j));
    }
    Eigen::MatrixXd Bs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(chosen.size()));
    for (std::size_t k = 0; k < chosen.size(); ++k) Bs.col(static_cast<Eigen::Index>(k)) = B.col(chosen[k]);
    const auto lf = detail::fit_linear(Bs, y, ResponseKind::gaussian);
    model.intercept = lf.intercept;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        model.terms.push_back({terms[static_cast<std::size_t>(chosen[k])].basis, lf.coef(static_cast<Eigen::Index>(k))});
    }
    model.cv_risk = risk(ResponseKind::gaussian, y, model.predict(X));
    fit.model = std::move(model);
    return fit;
}

BasisModel fit_mars(const Eigen::MatrixXd& X, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                    const MarsOptions& options, ResponseKind response)
{
    auto model = fit_mars_detailed(X, names, y, options).model;
    if (response == ResponseKind::binomial) {
        model = detail::refit_on_basis(std::move(model), X, y, response);
        model.cv_risk = risk(response, y, model.predict(X));
    }
    return model;
}

} // namespace pathmed
