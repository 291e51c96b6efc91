#pragma once

#include <pathmed/data_model.hpp>
#include <pathmed/density.hpp>
#include <pathmed/discovery.hpp>
#include <pathmed/learners.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pathmed {

/// g_delta / e and the clever covariate are clamped to this range.
inline constexpr double kRatioMin = 1e-6;
inline constexpr double kRatioMax = 1e6;

enum class PhiMethod { integration, pseudo_regression };
enum class EffectKind { nde, nie, te, theta_shift };
enum class EstimationMethod { integration, pseudo_regression, tmle, onestep };

std::string to_string(PhiMethod m);
std::string to_string(EffectKind k);
std::string to_string(EstimationMethod m);
PhiMethod parse_phi_method(std::string_view text);
EstimationMethod to_estimation_method(PhiMethod m);

struct NuisanceOptions {
    std::vector<LearnerSpec> outcome_library{LearnerSpec::glm(), LearnerSpec::mars_learner()};
    /// Library for the pseudo-outcome regression of phi on (A, W).
    std::vector<LearnerSpec> phi_library{LearnerSpec::glm(), LearnerSpec::mars_learner()};
    DensityOptions density;
    bool heteroscedastic = false;
    CvOptions cv;
};

/// Nuisance fits for one pathway, all on the same parameter-generating rows.
/// `covariates` is the adjustment set: baseline covariates plus every other
/// exposure and mediator.
struct NuisanceBundle {
    std::string exposure;
    std::string mediator;
    std::vector<std::string> covariates;
    ShiftSpec shift;
    /// Bounds for d(a, w): training support, or codes 1..k when discrete.
    Bounds exposure_bounds;
    Bounds mediator_bounds;

    /// E[Y | A, Z, W]; predictors are exposure, mediator (if any), covariates.
    BasisModel Q;
    /// E[Y | A, W] for the total effect; predictors are exposure, covariates.
    BasisModel Q_total;
    /// A | W
    ConditionalDensity g;
    /// A | Z, W (equal to g for direct-only pathways)
    ConditionalDensity e;
    /// Z | W (unused for direct-only pathways)
    ConditionalDensity r;
    /// Pseudo-outcome regression of phi on (A, W), once fit.
    std::optional<BasisModel> phi;
    std::size_t n_train = 0;

    bool has_mediator() const { return !mediator.empty(); }
    bool discrete_exposure() const { return g.discrete(); }
    std::string key() const { return has_mediator() ? exposure + "-" + mediator : exposure; }
};

/// Baseline covariates plus all exposures and mediators outside the pathway.
std::vector<std::string> adjustment_set(const Dataset& data, const Pathway& pathway);

/// Fits Q, Q_total, g, e and r on `train`. The shift is stored but not used
/// by any of these fits, so it may be adapted afterwards.
NuisanceBundle fit_nuisances(const Dataset& train, const Pathway& pathway, const ShiftSpec& shift,
                             const NuisanceOptions& options = {});

/// Fits bundle.phi from the pseudo-outcome (g/e) Q(d(A, W), Z, W) on `train`
/// under the bundle's current shift.
void fit_phi_regression(NuisanceBundle& bundle, const Dataset& train, const NuisanceOptions& options = {});

/// Common draws for a fold: `u` and `v` are stratified uniforms on [0, 1]
/// with antithetic pairing; `v` is an independent permutation so that
/// (u_j, v_j) forms a Latin hypercube for joint integrals.
struct McGrid {
    std::vector<double> u;
    std::vector<double> v;
    std::size_t size() const { return u.size(); }
};

McGrid make_mc_grid(std::size_t draws, std::uint64_t seed);

struct McEstimate {
    double value = 0.0;
    /// Plain Monte Carlo standard error (conservative for a stratified grid).
    double se = 0.0;
};

/// (hi - lo) * mean_j f(lo + (hi - lo) u_j).
McEstimate integrate_uniform(const std::function<double(double)>& f, double lo, double hi, std::span<const double> u);

/// clamp(g_delta / e) * (y - q), with floored densities.
double compute_dY(double y, double q, double g_delta, double e, double floor = kDensityFloor);

/// sum_k values_k * weights_k
double weighted_sum(std::span<const double> values, std::span<const double> weights);

struct EifComponents {
    std::vector<double> dY;
    std::vector<double> dA;
    std::vector<double> dZW;
    PhiMethod method = PhiMethod::integration;
    std::size_t mc_draws = 0;

    std::size_t size() const { return dY.size(); }
};

/// D^Y, D^A and D^{Z,W} for every row of `est`. Continuous integrals use the
/// grid; discrete exposures and mediators are summed exactly.
EifComponents compute_components(const NuisanceBundle& bundle, const Dataset& est, PhiMethod method,
                                 const McGrid& grid, unsigned workers = 1);

/// phi(a, w) for one row, by the requested method.
double compute_phi(const NuisanceBundle& bundle, const Dataset& est, std::size_t row, double a, PhiMethod method,
                   const McGrid& grid);

struct EffectEstimate {
    double psi = 0.0;
    double variance = 0.0;
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double p_value = 1.0;
    /// Fold index (1-based) or "pooled".
    std::string fold;
    EffectKind kind = EffectKind::theta_shift;
    EstimationMethod method = EstimationMethod::integration;
    std::string pathway;
    std::size_t n = 0;
    double delta = 0.0;
    /// Centered per-row influence function values.
    std::vector<double> eif;

    /// "NDE-integration", "TE-tmle", ...
    std::string type() const;
};

/// Fills variance = mean(eif^2) / n, Wald CI and two-sided p.
EffectEstimate make_estimate(EffectKind kind, EstimationMethod method, double psi, std::vector<double> eif,
                             double alpha = 0.05);

struct ThetaEstimate {
    double theta = 0.0;
    std::vector<double> eif;
};

/// theta = mean(dY + dA + dZW); eif = row sums - theta.
ThetaEstimate estimate_theta_shift(const EifComponents& c);

/// psi = theta - mean(y); eif_d = eif_theta - (y - mean(y)).
EffectEstimate direct_effect(const ThetaEstimate& theta, std::span<const double> y, PhiMethod method,
                             double alpha = 0.05);

/// Per-row inputs of the total-effect TMLE.
struct TotalEffectInputs {
    std::vector<double> y;
    /// Q_total at the observed and at the shifted exposure.
    std::vector<double> q_obs;
    std::vector<double> q_shift;
    /// Clever covariate g_delta / g at the observed and at the shifted exposure.
    std::vector<double> h_obs;
    std::vector<double> h_shift;

    std::size_t size() const { return y.size(); }
    void append(const TotalEffectInputs& other);
};

TotalEffectInputs total_effect_inputs(const NuisanceBundle& bundle, const Dataset& est);

struct Fluctuation {
    double epsilon = 0.0;
    EstimationMethod method = EstimationMethod::tmle;
    bool logistic = false;
    double y_lo = 0.0;
    double y_hi = 1.0;

    /// Updated prediction for an initial value q and clever covariate h.
    double update(double q, double h) const;
};

/// One fluctuation over all rows: linear for continuous outcomes, logistic on
/// min-max scaled values for bounded ones. Falls back to the one-step
/// correction when the fit does not converge.
Fluctuation fit_fluctuation(const TotalEffectInputs& in, bool bounded_outcome);

/// TE from the (possibly stacked) fluctuation, evaluated on `in`.
EffectEstimate total_effect(const TotalEffectInputs& in, const Fluctuation& fl, double alpha = 0.05);

/// Convenience: fluctuate on `in` and evaluate there.
EffectEstimate tmle_total_effect(const TotalEffectInputs& in, bool bounded_outcome = false, double alpha = 0.05);

/// |mean h (y - Q*)| after the fluctuation.
double tmle_score(const TotalEffectInputs& in, const Fluctuation& fl);

/// psi_i = psi_t - psi_d and eif_i = eif_t - eif_d; method follows the NDE.
EffectEstimate indirect_effect(const EffectEstimate& te, const EffectEstimate& nde, double alpha = 0.05);

/// Header plus one line per estimate, in the result-table column order.
std::string estimates_csv(std::span<const EffectEstimate> estimates);

} // namespace pathmed
