#pragma once

#include <pathmed/data_model.hpp>
#include <pathmed/discovery.hpp>
#include <pathmed/eif.hpp>

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pathmed {

struct RunConfig {
    int k = 10;
    std::uint64_t seed = 1;
    /// Shift per exposure; exposures not listed use default_delta.
    std::map<std::string, double> deltas;
    double default_delta = 1.0;
    ShiftDirection direction = ShiftDirection::up;
    double lambda = 50.0;
    double epsilon_frac = 0.10;
    /// Equal-frequency bins for continuous exposures; nullopt keeps them
    /// continuous. Exposures that are already discrete are left alone.
    std::optional<int> n_bins = 10;
    bool adapt_delta = true;
    std::vector<PhiMethod> phi_methods{PhiMethod::integration, PhiMethod::pseudo_regression};
    bool discover_only = false;
    /// Fixed pathways; when non-empty, discovery is skipped.
    std::vector<Pathway> var_sets;
    DiscoveryConfig discovery;
    NuisanceOptions nuisance;
    double alpha = 0.05;
    unsigned workers = 1;

    double delta_for(const std::string& exposure) const;
    void validate() const;
};

struct DeltaAdaptation {
    double delta = 0.0;
    int iterations = 0;
    /// Largest clever covariate at the returned delta.
    double max_ratio = 0.0;
};

/// Largest delta * (1 - epsilon_frac)^m whose clever covariates on `rows`
/// stay at or below lambda. Discrete exposures are returned unchanged.
DeltaAdaptation adapt_delta(const ConditionalDensity& g, const Dataset& rows, const ShiftSpec& spec, double lambda,
                            double epsilon_frac);

/// Per-fold pieces for one pathway, kept for pooling.
struct FoldPathway {
    Pathway pathway;
    int fold = 0;
    double delta = 0.0;
    int delta_iterations = 0;
    std::vector<std::pair<PhiMethod, EifComponents>> components;
    std::vector<double> y;
    TotalEffectInputs te;
    /// Chosen learner and CV risk of the outcome model, for the manifest.
    std::string q_learner;
    double q_risk = 0.0;
};

struct FoldResult {
    int fold = 0;
    std::vector<Pathway> pathways;
    std::vector<FoldPathway> estimates;
    std::vector<std::string> warnings;
    /// Keyed by pathway key; only filled when requested.
    std::map<std::string, NuisanceBundle> bundles;
    double discovery_seconds = 0.0;
    double estimation_seconds = 0.0;
};

/// Discovery (or the fixed var_sets) on T_k, nuisances on T_k, and the EIF
/// pieces on V_k. `data` must already carry its final exposure coding.
FoldResult run_fold(const Dataset& data, const FoldPlan& plan, int fold, const RunConfig& config,
                    bool keep_bundles = false);

struct PathwayResult {
    Pathway pathway;
    std::vector<int> folds;
    std::vector<double> fold_deltas;
    double mean_delta = 0.0;
    /// Found in fewer than two folds.
    bool low_consistency = false;
    double epsilon = 0.0;
    std::vector<EffectEstimate> per_fold;
    std::vector<EffectEstimate> pooled;
};

struct PooledResult {
    DiscoveryReport discovery;
    std::vector<PathwayResult> pathways;
    std::vector<std::string> warnings;
    /// Exposures binned before the split, with their maps.
    std::map<std::string, QuantizationMap> quantization;
    std::vector<FoldResult> folds;
    bool estimated = false;

    /// Fold rows first, then pooled rows, per pathway.
    std::vector<EffectEstimate> estimates() const;
    std::string results_csv() const;
    const EffectEstimate* find(const std::string& pathway, EffectKind kind, EstimationMethod method,
                               const std::string& fold = "pooled") const;
};

/// Stacked theta and NDE over several folds' components.
EffectEstimate pool_direct_effect(std::span<const EifComponents* const> components,
                                  std::span<const std::vector<double>* const> outcomes, PhiMethod method,
                                  double alpha = 0.05);

/// Turns fold pieces into fold-specific and pooled estimates per pathway.
std::vector<PathwayResult> pool_estimates(const std::vector<FoldResult>& folds, int k, bool bounded_outcome,
                                          double alpha = 0.05);

/// Quantizes continuous exposures when config.n_bins is set.
Dataset prepare_exposures(const Dataset& data, const RunConfig& config,
                          std::map<std::string, QuantizationMap>* maps = nullptr);

PooledResult run_crossfit(const Dataset& data, const RunConfig& config);

} // namespace pathmed
