#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pathmed {

enum class BasisKind { hinge, indicator, linear };

/// One univariate factor of a (possibly tensor-product) basis function.
struct BasisFactor {
    /// Index into the owning model's predictor list.
    int column = 0;
    double knot = 0.0;
    /// Hinge direction: max(0, sign * (x - knot)). Unused by other kinds.
    int sign = 1;
};

/// Product of `degree()` univariate factors of a single kind:
///   hinge      max(0, sign * (x - knot))
///   indicator  1{x <= knot}
///   linear     x
struct BasisFunction {
    BasisKind kind = BasisKind::linear;
    std::vector<BasisFactor> factors;

    int degree() const { return static_cast<int>(factors.size()); }
    double eval(std::span<const double> x) const;
    std::string label(std::span<const std::string> predictors) const;
    std::vector<std::string> variables(std::span<const std::string> predictors) const;
};

enum class ResponseKind { gaussian, binomial };

struct BasisTerm {
    BasisFunction basis;
    double coef = 0.0;
};

/// beta0 + sum_s beta_s * phi_s(x), through the logistic link for binomial
/// responses. Produced by every learner in the library.
struct BasisModel {
    std::string learner;
    std::vector<std::string> predictors;
    double intercept = 0.0;
    std::vector<BasisTerm> terms;
    ResponseKind response = ResponseKind::gaussian;
    std::size_t n_train = 0;
    /// Cross-validated risk when chosen by cv_select over several
    /// candidates; in-sample risk otherwise.
    double cv_risk = 0.0;

    double linear_predictor(std::span<const double> x) const;
    double predict(std::span<const double> x) const;
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
    /// n x terms.size() matrix of basis values, in term order.
    Eigen::MatrixXd basis_matrix(const Eigen::MatrixXd& X) const;
    bool intercept_only() const { return terms.empty(); }

    std::string to_json() const;
    static BasisModel from_json(std::string_view text);
};

struct GlmOptions {
    double gradient_tol = 1e-8;
    int max_iter = 100;
};

/// Linear (gaussian) or logistic (binomial) regression with one linear term
/// per predictor. Rank-deficient designs fall back to a tiny ridge.
BasisModel fit_glm(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                   const Eigen::VectorXd& y, ResponseKind response = ResponseKind::gaussian,
                   const GlmOptions& options = {});

struct MarsOptions {
    int max_degree = 2;
    /// Including the intercept.
    int max_terms = 21;
    /// Interior knot candidates per variable (the minimum is always tried,
    /// which yields a linear term).
    int max_knots = 20;
    /// GCV cost per knot.
    double penalty = 3.0;
    /// Forward pass stops when the R^2 gain drops below this.
    double threshold = 1e-3;
    /// Minimum rows on each side of a knot within the parent's support;
    /// 0 picks Friedman's 3 - log2(0.05 / p).
    int min_span = 0;
};

struct MarsFit {
    BasisModel model;
    /// GCV of the best subset of each size visited by the backward pass,
    /// index 0 = full forward model.
    std::vector<double> gcv_path;
    double forward_gcv = 0.0;
    double selected_gcv = 0.0;
    int forward_terms = 0;
};

MarsFit fit_mars_detailed(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                          const Eigen::VectorXd& y, const MarsOptions& options = {});

/// Forward hinge-pair search plus GCV backward pruning. Binomial responses
/// reuse the gaussian basis and refit its coefficients by logistic regression.
BasisModel fit_mars(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                    const Eigen::VectorXd& y, const MarsOptions& options = {},
                    ResponseKind response = ResponseKind::gaussian);

struct LassoOptions {
    double tol = 1e-12;
    int max_sweeps = 100000;
    bool record_objective = false;
};

struct LassoResult {
    double intercept = 0.0;
    Eigen::VectorXd beta;
    int sweeps = 0;
    /// Objective after every sweep when record_objective is set.
    std::vector<double> objective_trace;
};

/// Minimizes (1/2n)||y - b0 - B beta||^2 + lambda * ||beta||_1 by cyclic
/// coordinate descent with active-set cycling. The intercept is unpenalized.
LassoResult lasso_cd(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, double lambda,
                     const LassoOptions& options = {}, const Eigen::VectorXd* warm_start = nullptr);

double lasso_objective(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, double lambda,
                       double intercept, const Eigen::VectorXd& beta);

struct HalOptions {
    int max_degree = 1;
    int max_knots = 50;
    /// Knots per variable inside pairwise products.
    int interaction_knots = 10;
    /// Empty: automatic log-spaced grid from lambda_max down.
    std::vector<double> lambda_grid;
    int n_lambda = 30;
    double lambda_min_ratio = 1e-3;
    int cv_folds = 5;
    std::uint64_t seed = 1;
    std::size_t max_bases = 1000000;
};

struct HalFit {
    BasisModel model;
    double lambda = 0.0;
    std::vector<double> lambda_grid;
    std::vector<double> cv_mse;
    /// The full candidate indicator basis (term order of the design).
    std::vector<BasisFunction> bases;
};

HalFit fit_hal_lite_detailed(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                             const Eigen::VectorXd& y, const HalOptions& options = {});

/// Zero-order indicator bases 1{x <= knot} (and pairwise products) fit by
/// the lasso with lambda chosen by internal K-fold CV.
BasisModel fit_hal_lite(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                        const Eigen::VectorXd& y, const HalOptions& options = {},
                        ResponseKind response = ResponseKind::gaussian);

/// Indicator design used by fit_hal_lite, exposed for diagnostics.
std::vector<BasisFunction> hal_bases(const Eigen::MatrixXd& X, const HalOptions& options);

/// `mean` is the intercept-only model; in a selection library it lets CV
/// prefer "no signal".
enum class LearnerKind { mean, glm, mars, hal_lite };

struct LearnerSpec {
    LearnerKind kind = LearnerKind::glm;
    MarsOptions mars;
    HalOptions hal;

    std::string name() const;
    static LearnerSpec mean() { return {LearnerKind::mean, {}, {}}; }
    static LearnerSpec glm() { return {LearnerKind::glm, {}, {}}; }
    static LearnerSpec mars_learner(MarsOptions o = {}) { return {LearnerKind::mars, o, {}}; }
    static LearnerSpec hal_learner(HalOptions o = {}) { return {LearnerKind::hal_lite, {}, o}; }
};

LearnerKind parse_learner(std::string_view name);

BasisModel fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                       const std::vector<std::string>& names, const Eigen::VectorXd& y,
                       ResponseKind response = ResponseKind::gaussian);

struct CvOptions {
    int folds = 5;
    std::uint64_t seed = 1;
};

struct CvSelection {
    BasisModel model;
    std::size_t chosen = 0;
    /// Cross-validated risk per candidate (infinity for failed candidates).
    std::vector<double> risks;
};

/// Discrete super learner: K-fold CV risk (MSE, or negative log-likelihood
/// for binomial) per candidate; the winner is refit on all rows. Ties go to
/// the earlier candidate. A single candidate is fit directly, without CV.
CvSelection cv_select_detailed(std::span<const LearnerSpec> candidates, const Eigen::MatrixXd& X,
                               const std::vector<std::string>& names, const Eigen::VectorXd& y,
                               ResponseKind response = ResponseKind::gaussian,
                               const CvOptions& options = {});

BasisModel cv_select(std::span<const LearnerSpec> candidates, const Eigen::MatrixXd& X,
                     const std::vector<std::string>& names, const Eigen::VectorXd& y,
                     ResponseKind response = ResponseKind::gaussian, const CvOptions& options = {});

double risk(ResponseKind response, const Eigen::VectorXd& y, const Eigen::VectorXd& prediction);

struct FScore {
    /// Basis label, or variable name after aggregation.
    std::string target;
    std::vector<std::string> variables;
    double f_stat = 0.0;
    double df_model = 0.0;
    double df_resid = 0.0;
};

/// Per-basis F statistics from sequential (type-I) sums of squares in the
/// linear model on the model's basis columns. A column collinear with earlier
/// ones gets F = 0, df_model = 0 and a warning.
std::vector<FScore> anova_f_stats(const BasisModel& model, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, std::vector<std::string>* warnings = nullptr);

/// Variable score = sum of F over every basis that uses the variable,
/// sorted descending (ties by name).
std::vector<FScore> aggregate_f_by_variable(std::span<const FScore> scores);

} // namespace pathmed
