#pragma once

#include <pathmed/data_model.hpp>
#include <pathmed/learners.hpp>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace pathmed {

enum class Provenance { stage1_match, stage2_joint, direct_only };

std::string to_string(Provenance p);

/// One exposure and at most one mediator; an empty mediator means the
/// exposure acts on the outcome directly.
struct Pathway {
    std::string exposure;
    std::string mediator;
    Provenance provenance = Provenance::direct_only;
    int fold = -1;

    bool direct_only() const { return mediator.empty(); }
    /// "A-Z", or "A" for direct-only pathways.
    std::string key() const;
};

/// Forward-pass threshold for the outcome model. The outcome variance is
/// dominated by its strongest pathway, so weaker direct terms need a finer
/// cut than the mediator models.
inline constexpr double kOutcomeMarsThreshold = 1e-4;

struct DiscoveryConfig {
    /// Stage-1 (mediator) library. The intercept-only candidate lets CV
    /// decide a mediator has no drivers at all.
    std::vector<LearnerSpec> library{LearnerSpec::mean(), LearnerSpec::mars_learner()};
    /// Stage-2 (outcome) library.
    std::vector<LearnerSpec> outcome_library{LearnerSpec::mean(),
                                             LearnerSpec::mars_learner(MarsOptions{.threshold = kOutcomeMarsThreshold})};
    CvOptions cv;
    double f_quantile = 0.0;
};

struct DiscoveryResult {
    std::vector<Pathway> pathways;
    /// Aggregated per-variable F scores of each stage-1 model, by mediator.
    std::map<std::string, std::vector<FScore>> stage1_scores;
    std::vector<FScore> stage2_scores;
    /// Exposures retained for each mediator in stage 1.
    std::map<std::string, std::vector<std::string>> stage1_exposures;
    /// Variables retained in stage 2.
    std::vector<std::string> stage2_variables;
    std::vector<std::string> warnings;
};

/// Two-stage basis-regression discovery on the parameter-generating rows.
/// Stage 1 regresses each mediator on (A, W); stage 2 regresses Y on
/// (A, Z, W). A pathway needs both links, or a joint A x Z basis in stage 2.
DiscoveryResult discover_pathways(const Dataset& train, const DiscoveryConfig& config, int fold = -1);

/// Variables whose score is at least the empirical q-quantile of all
/// scores, in input order.
std::vector<std::string> filter_by_f_quantile(std::span<const FScore> scores, double q);

struct PathwayFrequency {
    Pathway pathway;
    int folds_found = 0;
    double frequency = 0.0;
};

struct DiscoveryReport {
    int k = 0;
    std::vector<std::vector<Pathway>> per_fold;
    /// Sorted by descending frequency, then key.
    std::vector<PathwayFrequency> frequencies;

    double frequency(const std::string& key) const;
    std::string to_json() const;
    std::string to_csv() const;
};

DiscoveryReport summarize_discovery(const std::vector<std::vector<Pathway>>& per_fold);

} // namespace pathmed
