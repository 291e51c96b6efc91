#include <pathmed/data_model.hpp>
#include <pathmed/error.hpp>
#include <pathmed/rng.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pathmed {

std::string to_string(Role role)
{
    switch (role) {
    case Role::covariate: return "covariate";
    case Role::exposure: return "exposure";
    case Role::mediator: return "mediator";
    case Role::outcome: return "outcome";
    }
    return "?";
}

std::string to_string(const VariableKind& kind)
{
    switch (kind.kind) {
    case Kind::continuous: return "continuous";
    case Kind::binary: return "binary";
    case Kind::categorical: return "categorical:" + std::to_string(kind.levels);
    case Kind::quantized: return "quantized:" + std::to_string(kind.levels);
    }
    return "?";
}

Role parse_role(std::string_view text)
{
    if (text == "covariate") return Role::covariate;
    if (text == "exposure") return Role::exposure;
    if (text == "mediator") return Role::mediator;
    if (text == "outcome") return Role::outcome;
    throw ValidationError("unknown role '" + std::string(text) + "'");
}

VariableKind parse_kind(std::string_view text)
{
    if (text == "continuous") return VariableKind::continuous();
    if (text == "binary") return VariableKind::binary();
    const auto colon = text.find(':');
    if (colon != std::string_view::npos) {
        const auto head = text.substr(0, colon);
        const auto tail = text.substr(colon + 1);
        int levels = 0;
        const auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), levels);
        if (ec == std::errc{} && ptr == tail.data() + tail.size() && levels >= 2) {
            if (head == "categorical") return VariableKind::categorical(levels);
            if (head == "quantized") return VariableKind::quantized(levels);
        }
    }
    throw ValidationError("unknown kind '" + std::string(text) +
                          "' (expected continuous, binary, categorical:K or quantized:N)");
}

namespace {

void validate_column(const Column& c)
{
    for (std::size_t i = 0; i < c.values.size(); ++i) {
        const double v = c.values[i];
        if (!std::isfinite(v)) {
            throw ValidationError("column '" + c.name + "' row " + std::to_string(i + 1) +
                                  ": non-finite value");
        }
        if (c.kind.kind == Kind::binary && v != 0.0 && v != 1.0) {
            throw ValidationError("column '" + c.name + "' row " + std::to_string(i + 1) +
                                  ": binary value must be 0 or 1");
        }
        if (c.kind.is_discrete() &&
            (v != std::floor(v) || v < 1.0 || v > static_cast<double>(c.kind.levels))) {
            throw ValidationError("column '" + c.name + "' row " + std::to_string(i + 1) +
                                  ": code must be an integer in [1, " +
                                  std::to_string(c.kind.levels) + "]");
        }
    }
}

} // namespace

Dataset::Dataset(std::vector<Column> columns) : columns_(std::move(columns))
{
    if (columns_.empty()) throw ValidationError("dataset has no columns");
    n_ = columns_.front().values.size();
    int outcomes = 0;
    int exposures = 0;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        const auto& c = columns_[j];
        if (c.values.size() != n_) {
            throw ValidationError("column '" + c.name + "' has length " +
                                  std::to_string(c.values.size()) + ", expected " +
                                  std::to_string(n_));
        }
        for (std::size_t i = 0; i < j; ++i) {
            if (columns_[i].name == c.name) throw ValidationError("duplicate column '" + c.name + "'");
        }
        outcomes += c.role == Role::outcome;
        exposures += c.role == Role::exposure;
        validate_column(c);
    }
    if (outcomes != 1) throw ValidationError("dataset needs exactly one outcome column");
    if (exposures < 1) throw ValidationError("dataset needs at least one exposure column");
}

bool Dataset::contains(std::string_view name) const
{
    return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name == name; });
}

const Column& Dataset::column(std::string_view name) const
{
    for (const auto& c : columns_) {
        if (c.name == name) return c;
    }
    throw ValidationError("no column named '" + std::string(name) + "'");
}

std::vector<std::string> Dataset::names(Role role) const
{
    std::vector<std::string> out;
    for (const auto& c : columns_) {
        if (c.role == role) out.push_back(c.name);
    }
    return out;
}

const std::string& Dataset::outcome() const
{
    for (const auto& c : columns_) {
        if (c.role == Role::outcome) return c.name;
    }
    throw ValidationError("dataset has no outcome");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const
{
    std::vector<Column> cols = columns_;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        auto& dst = cols[j].values;
        const auto& src = columns_[j].values;
        dst.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) dst[i] = src.at(rows[i]);
    }
    Dataset out;
    out.columns_ = std::move(cols);
    out.n_ = rows.size();
    return out;
}

Dataset Dataset::with_column(Column column) const
{
    std::vector<Column> cols = columns_;
    auto it = std::find_if(cols.begin(), cols.end(), [&](const Column& c) { return c.name == column.name; });
    if (it != cols.end()) {
        *it = std::move(column);
    } else {
        cols.push_back(std::move(column));
    }
    return Dataset(std::move(cols));
}

Dataset Dataset::with_role(std::string_view name, Role role) const
{
    std::vector<Column> cols = columns_;
    auto it = std::find_if(cols.begin(), cols.end(), [&](const Column& c) { return c.name == name; });
    if (it == cols.end()) throw ValidationError("no column named '" + std::string(name) + "'");
    it->role = role;
    return Dataset(std::move(cols));
}

Eigen::MatrixXd Dataset::matrix(std::span<const std::string> names) const
{
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto& v = column(names[j]).values;
        for (std::size_t i = 0; i < n_; ++i) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
    }
    return X;
}

std::string format_double(double x)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cell.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cell));
            cell.clear();
        } else {
            cell.push_back(ch);
        }
    }
    out.push_back(std::move(cell));
    return out;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace

Dataset parse_dataset(std::istream& in, const RoleConfig& roles, std::string_view source)
{
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(std::string(source) + ": empty file, header row required");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3); // UTF-8 BOM
    auto header = split_csv_line(line);
    for (auto& h : header) h = std::string(trim(h));

    std::vector<std::size_t> source_index;
    for (const auto& spec : roles) {
        auto it = std::find(header.begin(), header.end(), spec.name);
        if (it == header.end()) {
            throw ValidationError(std::string(source) + ": missing column '" + spec.name + "'");
        }
        source_index.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    std::vector<Column> cols;
    for (const auto& spec : roles) cols.push_back(Column{spec.name, spec.role, spec.kind, {}});

    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        for (std::size_t j = 0; j < roles.size(); ++j) {
            const auto idx = source_index[j];
            const std::string where = std::string(source) + ": row " + std::to_string(row) +
                                      ", column '" + roles[j].name + "'";
            if (idx >= cells.size()) throw ValidationError(where + ": missing value");
            const auto cell = trim(cells[idx]);
            if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
                throw ValidationError(where + ": missing value");
            }
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw ValidationError(where + ": non-numeric value '" + std::string(cell) + "'");
            }
            cols[j].values.push_back(v);
        }
    }
    return Dataset(std::move(cols));
}

Dataset load_dataset(const std::filesystem::path& path, const RoleConfig& roles)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open data file '" + path.string() + "'");
    return parse_dataset(in, roles, path.string());
}

void write_dataset(const Dataset& data, std::ostream& out)
{
    const auto& cols = data.columns();
    for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << cols[j].name;
    out << '\n';
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << format_double(cols[j].values[i]);
        out << '\n';
    }
}

void write_dataset(const Dataset& data, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    write_dataset(data, out);
}

int QuantizationMap::assign(double value) const
{
    // cut_points[1..n_bins-1] are the lower edges of bins 2..n_bins.
    int bin = 1;
    for (int q = 1; q < n_bins; ++q) {
        if (value >= cut_points[static_cast<std::size_t>(q)]) bin = q + 1;
    }
    return bin;
}

double QuantizationMap::uniform_lower_bound(int q) const
{
    return a_min + ((a_max - a_min) / static_cast<double>(n_bins)) * static_cast<double>(q - 1);
}

std::pair<double, double> QuantizationMap::uniform_interval(int q) const
{
    return {uniform_lower_bound(q), uniform_lower_bound(q + 1)};
}

QuantizeResult quantize_exposure(const Dataset& data, const std::string& exposure, int n_bins)
{
    const auto& col = data.column(exposure);
    if (col.kind.kind != Kind::continuous) {
        throw ValidationError("cannot quantize '" + exposure + "': exposure is not continuous");
    }
    if (n_bins < 2) throw ValidationError("n_bins must be at least 2");
    const std::size_t n = data.n();
    if (n < static_cast<std::size_t>(n_bins)) {
        throw ValidationError("cannot quantize '" + exposure + "' into " + std::to_string(n_bins) +
                              " bins with only " + std::to_string(n) + " rows");
    }
    const auto& v = col.values;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::size_t distinct = n ? 1 : 0;
    for (std::size_t r = 1; r < n; ++r) distinct += v[order[r]] != v[order[r - 1]];
    if (distinct < static_cast<std::size_t>(n_bins)) {
        throw ValidationError("cannot quantize '" + exposure + "': only " + std::to_string(distinct) +
                              " distinct values for " + std::to_string(n_bins) +
                              " bins; use n_bins <= " + std::to_string(distinct));
    }

    std::vector<double> codes(n);
    std::size_t r = 0;
    while (r < n) {
        // A tie group takes the bin of its first rank.
        std::size_t end = r + 1;
        while (end < n && v[order[end]] == v[order[r]]) ++end;
        const int bin = static_cast<int>((r * static_cast<std::size_t>(n_bins)) / n) + 1;
        for (std::size_t t = r; t < end; ++t) codes[order[t]] = bin;
        r = end;
    }

    QuantizationMap map;
    map.source = exposure;
    map.n_bins = n_bins;
    map.a_min = v[order.front()];
    map.a_max = v[order.back()];
    map.bin_counts.assign(static_cast<std::size_t>(n_bins), 0);
    map.cut_points.assign(static_cast<std::size_t>(n_bins) + 1, 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(n_bins), false);
    for (std::size_t t = 0; t < n; ++t) {
        const auto i = order[t];
        const auto b = static_cast<std::size_t>(codes[i]) - 1;
        if (!seen[b]) {
            map.cut_points[b] = v[i];
            seen[b] = true;
        }
        ++map.bin_counts[b];
    }
    for (std::size_t b = 0; b < seen.size(); ++b) {
        if (!seen[b]) {
            throw ValidationError("cannot quantize '" + exposure + "': ties leave bin " +
                                  std::to_string(b + 1) + " empty; use a smaller n_bins");
        }
    }
    map.cut_points[0] = map.a_min;
    map.cut_points[static_cast<std::size_t>(n_bins)] = map.a_max;

    Column out = col;
    out.kind = VariableKind::quantized(n_bins);
    out.values = std::move(codes);
    return {data.with_column(std::move(out)), std::move(map)};
}

void ShiftSpec::validate() const
{
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ValidationError("shift delta must be finite and >= 0");
    if (discrete) {
        if (n_bins < 2) throw ValidationError("discrete shift needs n_bins >= 2");
        if (delta != std::floor(delta)) throw ValidationError("discrete shift delta must be an integer number of bins");
    }
}

double apply_shift(double a, const ShiftSpec& spec, Bounds bounds)
{
    if (spec.discrete) {
        const double shifted = a + spec.signed_delta();
        return std::clamp(shifted, 1.0, static_cast<double>(spec.n_bins));
    }
    if (spec.direction == ShiftDirection::down) {
        return a > bounds.lower + spec.delta ? a - spec.delta : a;
    }
    return a < bounds.upper - spec.delta ? a + spec.delta : a;
}

Bounds empirical_bounds(std::span<const double> values)
{
    if (values.empty()) throw ValidationError("empirical bounds of an empty column");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return {*lo, *hi};
}

FoldPlan::FoldPlan(int k, std::vector<int> assignment) : k_(k), assignment_(std::move(assignment))
{
    estimation_.resize(static_cast<std::size_t>(k));
    parameter_.resize(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < assignment_.size(); ++i) {
        const int f = assignment_[i];
        if (f < 0 || f >= k) throw ValidationError("fold index out of range");
        for (int j = 0; j < k; ++j) {
            (j == f ? estimation_ : parameter_)[static_cast<std::size_t>(j)].push_back(i);
        }
    }
}

FoldPlan make_folds(std::size_t n, int k, std::uint64_t seed)
{
    if (k < 2) throw ValidationError("K >= 2 required for cross-fitting");
    if (n < 2 * static_cast<std::size_t>(k)) {
        throw ValidationError("need n >= 2K rows (n = " + std::to_string(n) + ", K = " + std::to_string(k) + ")");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = make_rng(seed, {0xF01D});
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    std::vector<int> assignment(n);
    for (std::size_t pos = 0; pos < n; ++pos) assignment[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return FoldPlan(k, std::move(assignment));
}

} // namespace pathmed
