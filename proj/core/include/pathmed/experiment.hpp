#pragma once

#include <pathmed/crossfit.hpp>
#include <pathmed/simulation.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pathmed {

/// One estimate an estimator reports for a simulated dataset.
struct EstimateRecord {
    /// "NDE", "NIE" or "TE".
    std::string parameter;
    std::string method;
    double estimate = 0.0;
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
};

using Estimator = std::function<std::vector<EstimateRecord>(const SimDataset&, std::uint64_t seed)>;

/// Pooled NDE/NIE per phi method and the TE for `pathway` from run_crossfit.
Estimator crossfit_estimator(RunConfig base, std::string pathway = "A-Z");

/// Reports the truth itself with a zero-width interval.
Estimator oracle_estimator(GroundTruth truth);

struct ExperimentConfig {
    Generator generator = Generator::dgp1;
    /// Equal-frequency bins for DGP 1's exposure; nullopt keeps it continuous.
    std::optional<int> bins;
    double delta = 1.0;
    std::vector<std::size_t> sample_sizes{250, 500, 1000};
    int iterations = 20;
    std::uint64_t seed = 1;
    std::size_t oracle_n = 100000;
    unsigned workers = 1;
};

struct IterationRecord {
    std::size_t n = 0;
    int iteration = 0;
    std::string parameter;
    std::string method;
    double estimate = 0.0;
    double truth = 0.0;
    double se = 0.0;
    bool covered = false;
};

struct IterationFailure {
    std::size_t n = 0;
    int iteration = 0;
    std::string message;
};

struct MetricRow {
    std::size_t n = 0;
    std::string parameter;
    std::string method;
    int iterations = 0;
    /// Mean signed error and mean absolute error.
    double bias = 0.0;
    double mean_abs_bias = 0.0;
    /// Population variance of the estimates across iterations.
    double variance = 0.0;
    double mse = 0.0;
    double coverage = 0.0;
    double mean_se = 0.0;
    /// Error divided by the SD of the estimates, one per iteration.
    std::vector<double> standardized_bias;
    /// Mean absolute bias a root-n consistent estimator would have, starting
    /// from the smallest sample size.
    double root_n_projection = 0.0;
};

struct ExperimentResult {
    ExperimentConfig config;
    GroundTruth truth;
    std::vector<IterationRecord> records;
    std::vector<IterationFailure> failures;
    std::vector<MetricRow> metrics;

    const MetricRow* metric(std::size_t n, const std::string& parameter, const std::string& method) const;
    std::string records_csv() const;
    std::string metrics_json() const;
    std::string bias_csv() const;
    std::string coverage_csv() const;
    std::string standardized_bias_csv() const;
};

/// Truth for the configured generator, shift and binning.
GroundTruth experiment_truth(const ExperimentConfig& config);

/// Generates `iterations` datasets per sample size, estimates, and scores.
/// Iterations that throw are recorded in `failures` and left out of the
/// metrics. With no estimator, the truth is computed and crossfit_estimator
/// with default settings and var_sets = {A -> Z} is used.
ExperimentResult run_experiment(const ExperimentConfig& config, const Estimator& estimator = {});

/// Aggregates records (grouped by n, parameter, method, in first-seen order).
std::vector<MetricRow> compute_metrics(const std::vector<IterationRecord>& records);

struct DetectionConfig {
    std::vector<std::size_t> sample_sizes{250, 500, 1000};
    int iterations = 20;
    std::uint64_t seed = 1;
    /// Fold count and discovery settings; estimation is never run. Exposures
    /// stay continuous by default: binning correlated exposures leaves
    /// residual confounding that shows up as false pathways.
    RunConfig run = [] {
        RunConfig r;
        r.n_bins.reset();
        return r;
    }();
    unsigned workers = 1;
};

struct DetectionRow {
    std::size_t n = 0;
    Pathway pathway;
    bool true_pathway = false;
    /// Fold frequency averaged over runs.
    double mean_frequency = 0.0;
    /// Runs in which the pathway was found in at least half the folds.
    int runs_detected = 0;
    int runs = 0;
};

struct DetectionResult {
    DetectionConfig config;
    /// Every exposure x mediator pair and every direct effect, per n.
    std::vector<DetectionRow> rows;
    std::vector<IterationFailure> failures;

    const DetectionRow* find(std::size_t n, const std::string& key) const;
    std::string to_csv() const;
    std::string to_json() const;
};

/// Cross-fitted discovery on DGP 2 data, scored against its true pathways
/// (A1 -> Z1, A2 -> Z2) and direct effects (A1, A2).
DetectionResult run_detection(const DetectionConfig& config);

} // namespace pathmed
