#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pathmed {

enum class Role { covariate, exposure, mediator, outcome };

enum class Kind { continuous, binary, categorical, quantized };

struct VariableKind {
    Kind kind = Kind::continuous;
    /// Number of classes for categorical / quantized columns (codes 1..levels).
    int levels = 0;

    bool is_discrete() const { return kind == Kind::categorical || kind == Kind::quantized; }
    static VariableKind continuous() { return {Kind::continuous, 0}; }
    static VariableKind binary() { return {Kind::binary, 2}; }
    static VariableKind categorical(int k) { return {Kind::categorical, k}; }
    static VariableKind quantized(int bins) { return {Kind::quantized, bins}; }
};

std::string to_string(Role role);
std::string to_string(const VariableKind& kind);
Role parse_role(std::string_view text);
/// Accepts "continuous", "binary", "categorical:K", "quantized:N".
VariableKind parse_kind(std::string_view text);

struct Column {
    std::string name;
    Role role = Role::covariate;
    VariableKind kind;
    std::vector<double> values;
};

/// Column-oriented table with role and kind tags. Immutable once built;
/// every transformation returns a new Dataset.
class Dataset {
public:
    Dataset() = default;
    /// Validates: equal lengths, finite values, exactly one outcome, at least
    /// one exposure, discrete codes in range.
    explicit Dataset(std::vector<Column> columns);

    std::size_t n() const { return n_; }
    const std::vector<Column>& columns() const { return columns_; }
    bool contains(std::string_view name) const;
    const Column& column(std::string_view name) const;
    std::span<const double> values(std::string_view name) const { return column(name).values; }

    std::vector<std::string> names(Role role) const;
    const std::string& outcome() const;

    Dataset subset(std::span<const std::size_t> rows) const;
    /// Replaces the column with the same name, or appends it.
    Dataset with_column(Column column) const;
    /// Same data with a different role assignment for one column.
    Dataset with_role(std::string_view name, Role role) const;

    /// n x names.size() matrix, columns in the order given.
    Eigen::MatrixXd matrix(std::span<const std::string> names) const;

private:
    std::vector<Column> columns_;
    std::size_t n_ = 0;
};

struct RoleSpec {
    std::string name;
    Role role = Role::covariate;
    VariableKind kind;
};
using RoleConfig = std::vector<RoleSpec>;

/// Reads a header-first CSV; only configured columns are kept, in
/// configuration order. Row order is preserved.
Dataset load_dataset(const std::filesystem::path& path, const RoleConfig& roles);
Dataset parse_dataset(std::istream& in, const RoleConfig& roles, std::string_view source = "<stream>");

/// Writes every column with shortest round-trip formatting, so load after
/// write reproduces each double exactly.
void write_dataset(const Dataset& data, const std::filesystem::path& path);
void write_dataset(const Dataset& data, std::ostream& out);

/// Shortest decimal string that parses back to exactly `x`.
std::string format_double(double x);

struct QuantizationMap {
    std::string source;
    int n_bins = 0;
    /// Empirical edges: cut_points[0] = a_min, cut_points[q] = smallest value
    /// assigned to bin q + 1, cut_points[n_bins] = a_max.
    std::vector<double> cut_points;
    double a_min = 0.0;
    double a_max = 0.0;
    std::vector<std::size_t> bin_counts;

    /// Bin code (1..n_bins) for a new value under the empirical edges.
    int assign(double value) const;
    /// Lower bound of bin q on the uniform-width reporting scale.
    double uniform_lower_bound(int q) const;
    std::pair<double, double> uniform_interval(int q) const;
};

struct QuantizeResult {
    Dataset data;
    QuantizationMap map;
};

/// Equal-frequency binning by stable rank; tied values share a bin.
QuantizeResult quantize_exposure(const Dataset& data, const std::string& exposure, int n_bins);

enum class ShiftDirection { up, down };

struct Bounds {
    double lower = 0.0;
    double upper = 0.0;
};

struct ShiftSpec {
    std::string exposure;
    double delta = 1.0;
    ShiftDirection direction = ShiftDirection::up;
    /// Discrete (quantized / categorical) exposures shift by whole bins and
    /// clamp to [1, n_bins].
    bool discrete = false;
    int n_bins = 0;

    double signed_delta() const { return direction == ShiftDirection::up ? delta : -delta; }
    void validate() const;
};

/// The shift regime d(a, w). Continuous: down gives a - delta when
/// a > l + delta and leaves a unchanged otherwise; up is the mirror image
/// against u. Discrete: the bin index moves by delta and is clamped.
double apply_shift(double a, const ShiftSpec& spec, Bounds bounds);

/// Empirical support of a column.
Bounds empirical_bounds(std::span<const double> values);

class FoldPlan {
public:
    FoldPlan(int k, std::vector<int> assignment);

    int k() const { return k_; }
    std::size_t n() const { return assignment_.size(); }
    const std::vector<int>& assignment() const { return assignment_; }
    /// V_k: held-out rows where the parameter is evaluated.
    const std::vector<std::size_t>& estimation_ids(int fold) const { return estimation_[fold]; }
    /// T_k: the complement, used for discovery and nuisance fits.
    const std::vector<std::size_t>& parameter_ids(int fold) const { return parameter_[fold]; }

private:
    int k_;
    std::vector<int> assignment_;
    std::vector<std::vector<std::size_t>> estimation_;
    std::vector<std::vector<std::size_t>> parameter_;
};

FoldPlan make_folds(std::size_t n, int k, std::uint64_t seed);

} // namespace pathmed
