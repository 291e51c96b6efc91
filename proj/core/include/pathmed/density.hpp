#pragma once

#include <pathmed/data_model.hpp>
#include <pathmed/learners.hpp>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pathmed {

inline constexpr double kDensityFloor = 1e-10;

enum class DensityForm { hose, hese, categorical_pmf };

std::string to_string(DensityForm form);

/// Conditional law of the target at one conditioner row.
struct DensityRow {
    DensityForm form = DensityForm::hose;
    double mu = 0.0;
    double sigma = 1.0;
    /// Class probabilities for codes 1..k (already floored).
    std::vector<double> pmf;
    double floor = kDensityFloor;

    double density(double a) const;
};

struct ConditionalDensity {
    std::string target;
    std::vector<std::string> conditioners;
    DensityForm form = DensityForm::hose;
    double floor = kDensityFloor;
    double support_min = 0.0;
    double support_max = 0.0;

    BasisModel mean_model;
    double sigma = 1.0;
    /// HESE: model for log(residual^2); the Gaussian bias of log chi^2_1 is
    /// added back when predicting.
    BasisModel log_var_model;

    /// Categorical: logits for codes 2..k against code 1, on standardized
    /// conditioners. Row c-2 holds (intercept, slopes).
    int n_classes = 0;
    Eigen::MatrixXd logit_weights;
    Eigen::VectorXd x_center;
    Eigen::VectorXd x_scale;

    DensityRow at(std::span<const double> x) const;
    bool discrete() const { return form == DensityForm::categorical_pmf; }

    std::string to_json() const;
    static ConditionalDensity from_json(std::string_view text);
};

/// E[log chi^2_1] = digamma(1/2) + log 2.
inline constexpr double kLogChiSqBias = -1.2703628454614782;

struct DensityOptions {
    std::vector<LearnerSpec> library{LearnerSpec::glm(), LearnerSpec::mars_learner()};
    CvOptions cv;
    double floor = kDensityFloor;
    /// Ridge on non-intercept softmax weights.
    double ridge = 1e-4;
    int min_class_count = 5;
};

ConditionalDensity fit_hose(const Dataset& data, const std::string& target,
                            const std::vector<std::string>& conditioners, const DensityOptions& options = {});
ConditionalDensity fit_hese(const Dataset& data, const std::string& target,
                            const std::vector<std::string>& conditioners, const DensityOptions& options = {});
/// Multinomial logistic model for codes 1..k.
ConditionalDensity fit_categorical_pmf(const Dataset& data, const std::string& target,
                                       const std::vector<std::string>& conditioners,
                                       const DensityOptions& options = {});

/// HOSE for continuous targets, categorical_pmf for discrete ones.
ConditionalDensity fit_density(const Dataset& data, const std::string& target,
                               const std::vector<std::string>& conditioners, const DensityOptions& options = {},
                               bool heteroscedastic = false);

double eval_density(const ConditionalDensity& cd, double a, std::span<const double> x);

/// Density of the shifted exposure d(A) at `a`. Up shifts move mass from
/// a - delta to a, except that values within delta of the upper bound stay
/// put; down shifts mirror this. Discrete shifts sum the mass of every code
/// mapped onto `a`. delta = 0 returns the unshifted density.
double eval_shifted(const ConditionalDensity& cd, double a, std::span<const double> x, const ShiftSpec& spec,
                    Bounds bounds);
double shifted_density(const DensityRow& row, double a, const ShiftSpec& spec, Bounds bounds);

/// g(d(a) | x): the density at the shifted point itself.
double eval_at_shift(const ConditionalDensity& cd, double a, std::span<const double> x, const ShiftSpec& spec,
                     Bounds bounds);

/// eval_shifted / eval_density.
double density_ratio(const ConditionalDensity& cd, double a, std::span<const double> x, const ShiftSpec& spec,
                     Bounds bounds);

/// Bounds used by a fitted density for shifting: codes 1..k when discrete,
/// else the training support.
Bounds shift_bounds(const ConditionalDensity& cd);

} // namespace pathmed
