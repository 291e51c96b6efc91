#pragma once

#include <pathmed/learners.hpp>

#include <cstdint>
#include <vector>

namespace pathmed::detail {

struct LinearFit {
    double intercept = 0.0;
    Eigen::VectorXd coef;
};

/// Intercept plus coefficients for the columns of B (no intercept column in B).
LinearFit fit_linear(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, ResponseKind response,
                     const GlmOptions& options = {});

/// Replaces the coefficients of `model` with a fit of `response` on its own
/// basis columns.
BasisModel refit_on_basis(BasisModel model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          ResponseKind response);

/// Deterministic K-fold split of n rows.
std::vector<int> fold_labels(std::size_t n, int folds, std::uint64_t seed);

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows);
Eigen::VectorXd take_rows(const Eigen::VectorXd& y, const std::vector<std::size_t>& rows);

} // namespace pathmed::detail
