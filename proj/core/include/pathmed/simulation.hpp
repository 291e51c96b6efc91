#pragma once

#include <pathmed/data_model.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pathmed {

enum class Generator { dgp1, dgp2 };

std::string to_string(Generator g);
Generator parse_generator(std::string_view text);

/// Observed data plus counterfactuals that reuse the observed noise draws.
struct SimDataset {
    Dataset data;
    Generator generator = Generator::dgp1;
    std::uint64_t seed = 0;
    double delta = 1.0;
    /// Exposure whose shift defines the counterfactuals.
    std::string shifted_exposure;
    std::vector<double> a_shift;
    /// Mediator under the shifted exposure (DGP 1: Z; DGP 2: the mediator
    /// driven by the shifted exposure).
    std::vector<double> z_shift;
    /// Y with the exposure shifted and mediators at their observed values.
    std::vector<double> y_shift_a;
    /// Y with the exposure shifted and mediators responding to it.
    std::vector<double> y_shift_az;
    std::optional<QuantizationMap> quantization;
};

/// W1 ~ N(20, 2^2), W2, W3 ~ Bern(0.5), W4 ~ N(30, 3^2), W5 ~ Poisson(1.2);
/// A ~ N(1 + 0.5 W1, 1); Z ~ N(2A + W1, 1); Y = 10Z + 40A + N(0, 1).
/// With `bins`, A is replaced by equal-frequency bin codes before Z and Y
/// are drawn, and the counterfactual shift moves delta bins up (clamped).
SimDataset gen_dgp1(std::size_t n, double delta, std::uint64_t seed, std::optional<int> bins = std::nullopt);

/// Five correlated exposures, five mediators, and
/// Y = 10 Z1 + 40 A1 + 15 W3 - 6 A2 + 7 Z2. Counterfactuals shift
/// `shifted_exposure` up by delta.
SimDataset gen_dgp2(std::size_t n, std::uint64_t seed, double delta = 1.0, const std::string& shifted_exposure = "A1");

/// Exposure noise covariance of DGP 2.
Eigen::Matrix<double, 5, 5> dgp2_sigma();

struct GroundTruth {
    double nde = 0.0;
    double nie = 0.0;
    double ate = 0.0;
};

/// Monte Carlo truth from the counterfactual columns; ate = nde + nie.
GroundTruth ground_truth(const SimDataset& sim);
GroundTruth ground_truth(Generator generator, double delta, std::size_t oracle_n = 100000, std::uint64_t seed = 20240101,
                         std::optional<int> bins = std::nullopt);

} // namespace pathmed
