#include "config.hpp"

#include <pathmed/data_model.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <sstream>

namespace pathmed::cli {

ConfigError::ConfigError(std::string source, int line, std::string field, const std::string& message)
    : ValidationError(source + ":" + std::to_string(line) + ": " + (field.empty() ? "" : "'" + field + "': ") + message),
      line_(line),
      field_(std::move(field))
{
}

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Thrown by value parsers; the caller attaches line and key.
struct BadValue {
    std::string message;
};

template <class T>
T parse_integer(const std::string& v)
{
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw BadValue{"expected an integer, got '" + v + "'"};
    return out;
}

double parse_real(const std::string& v)
{
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || std::isnan(out)) {
        throw BadValue{"expected a number, got '" + v + "'"};
    }
    return out;
}

bool parse_bool(const std::string& v)
{
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw BadValue{"expected true or false, got '" + v + "'"};
}

std::vector<LearnerSpec> parse_library(const std::string& v, double mars_threshold = -1.0)
{
    std::vector<LearnerSpec> out;
    for (const auto& name : split_list(v)) {
        LearnerSpec s;
        try {
            s.kind = parse_learner(name);
        } catch (const ValidationError& e) {
            throw BadValue{e.what()};
        }
        if (s.kind == LearnerKind::mars && mars_threshold > 0) s.mars.threshold = mars_threshold;
        out.push_back(s);
    }
    if (out.empty()) throw BadValue{"library is empty"};
    return out;
}

std::string library_text(const std::vector<LearnerSpec>& lib)
{
    std::string out;
    for (const auto& s : lib) out += (out.empty() ? "" : ",") + s.name();
    return out;
}

std::string real_text(double x)
{
    return std::isinf(x) ? "inf" : format_double(x);
}

using Handler = std::function<void(CliConfig&, const std::string&)>;

const std::map<std::string, Handler>& handlers()
{
    static const std::map<std::string, Handler> h{
        {"k",
         [](CliConfig& c, const std::string& v) {
             c.run.k = parse_integer<int>(v);
             if (c.run.k < 2) throw BadValue{"K ≥ 2 required (got K = " + v + ")"};
         }},
        {"seed",
         [](CliConfig& c, const std::string& v) {
             c.run.seed = parse_integer<std::uint64_t>(v);
             c.seed_given = true;
         }},
        {"workers",
         [](CliConfig& c, const std::string& v) {
             const int w = parse_integer<int>(v);
             if (w < 1) throw BadValue{"must be at least 1"};
             c.run.workers = static_cast<unsigned>(w);
             c.workers_given = true;
         }},
        {"delta", [](CliConfig& c, const std::string& v) { c.run.default_delta = parse_real(v); }},
        {"direction",
         [](CliConfig& c, const std::string& v) {
             if (v == "up") c.run.direction = ShiftDirection::up;
             else if (v == "down") c.run.direction = ShiftDirection::down;
             else throw BadValue{"expected up or down, got '" + v + "'"};
         }},
        {"lambda", [](CliConfig& c, const std::string& v) { c.run.lambda = parse_real(v); }},
        {"epsilon", [](CliConfig& c, const std::string& v) { c.run.epsilon_frac = parse_real(v); }},
        {"n_bins",
         [](CliConfig& c, const std::string& v) {
             if (v == "none") c.run.n_bins.reset();
             else c.run.n_bins = parse_integer<int>(v);
         }},
        {"adapt_delta", [](CliConfig& c, const std::string& v) { c.run.adapt_delta = parse_bool(v); }},
        {"phi_methods",
         [](CliConfig& c, const std::string& v) {
             c.run.phi_methods.clear();
             for (const auto& m : split_list(v)) {
                 try {
                     c.run.phi_methods.push_back(parse_phi_method(m));
                 } catch (const ValidationError& e) {
                     throw BadValue{e.what()};
                 }
             }
         }},
        {"discover_only", [](CliConfig& c, const std::string& v) { c.run.discover_only = parse_bool(v); }},
        {"var_sets",
         [](CliConfig& c, const std::string& v) {
             c.run.var_sets.clear();
             for (const auto& item : split_list(v)) {
                 const auto dash = item.find('-');
                 Pathway p;
                 p.exposure = trim(item.substr(0, dash));
                 if (dash != std::string::npos) {
                     p.mediator = trim(item.substr(dash + 1));
                     p.provenance = Provenance::stage1_match;
                 }
                 if (p.exposure.empty() || (dash != std::string::npos && p.mediator.empty())) {
                     throw BadValue{"expected EXPOSURE-MEDIATOR or EXPOSURE, got '" + item + "'"};
                 }
                 c.run.var_sets.push_back(p);
             }
         }},
        {"f_quantile", [](CliConfig& c, const std::string& v) { c.run.discovery.f_quantile = parse_real(v); }},
        {"alpha", [](CliConfig& c, const std::string& v) { c.run.alpha = parse_real(v); }},
        {"heteroscedastic", [](CliConfig& c, const std::string& v) { c.run.nuisance.heteroscedastic = parse_bool(v); }},
        {"cv_folds",
         [](CliConfig& c, const std::string& v) {
             const int f = parse_integer<int>(v);
             if (f < 2) throw BadValue{"cv_folds must be at least 2"};
             c.run.nuisance.cv.folds = f;
             c.run.nuisance.density.cv.folds = f;
             c.run.discovery.cv.folds = f;
         }},
        {"discovery_library",
         [](CliConfig& c, const std::string& v) { c.run.discovery.library = parse_library(v); }},
        {"discovery_outcome_library",
         [](CliConfig& c, const std::string& v) {
             c.run.discovery.outcome_library = parse_library(v, kOutcomeMarsThreshold);
         }},
        {"outcome_library", [](CliConfig& c, const std::string& v) { c.run.nuisance.outcome_library = parse_library(v); }},
        {"phi_library", [](CliConfig& c, const std::string& v) { c.run.nuisance.phi_library = parse_library(v); }},
        {"density_library",
         [](CliConfig& c, const std::string& v) { c.run.nuisance.density.library = parse_library(v); }},
        {"scenario", [](CliConfig& c, const std::string& v) { c.simulation.scenario = v; }},
        {"scale", [](CliConfig& c, const std::string& v) { c.simulation.scale = v; }},
        {"iterations", [](CliConfig& c, const std::string& v) { c.simulation.iterations = parse_integer<int>(v); }},
        {"sample_sizes",
         [](CliConfig& c, const std::string& v) {
             std::vector<std::size_t> sizes;
             for (const auto& s : split_list(v)) sizes.push_back(parse_integer<std::size_t>(s));
             if (sizes.empty()) throw BadValue{"needs at least one sample size"};
             c.simulation.sample_sizes = sizes;
         }},
        {"oracle_n", [](CliConfig& c, const std::string& v) { c.simulation.oracle_n = parse_integer<std::size_t>(v); }},
    };
    return h;
}

void parse_column(CliConfig& c, const std::string& name, const std::string& v)
{
    std::istringstream words(v);
    std::string role, kind;
    words >> role >> kind;
    std::string extra;
    if (words >> extra) throw BadValue{"expected ROLE [KIND], got '" + v + "'"};
    if (role.empty()) throw BadValue{"missing role"};
    RoleSpec spec;
    spec.name = name;
    try {
        spec.role = parse_role(role);
        spec.kind = kind.empty() ? VariableKind::continuous() : parse_kind(kind);
    } catch (const ValidationError& e) {
        throw BadValue{e.what()};
    }
    const auto dup = std::find_if(c.roles.begin(), c.roles.end(), [&](const RoleSpec& r) { return r.name == name; });
    if (dup != c.roles.end()) throw BadValue{"column listed twice"};
    c.roles.push_back(spec);
}

} // namespace

CliConfig parse_config(std::istream& in, std::string_view source)
{
    CliConfig c;
    std::map<std::string, int> seen;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = trim(std::string_view(raw).substr(0, hash));
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError(std::string(source), line, "", "expected key = value");
        const std::string key = trim(std::string_view(text).substr(0, eq));
        const std::string value = trim(std::string_view(text).substr(eq + 1));
        if (key.empty()) throw ConfigError(std::string(source), line, "", "missing key before '='");
        if (value.empty()) throw ConfigError(std::string(source), line, key, "missing value");
        if (const auto it = seen.find(key); it != seen.end()) {
            throw ConfigError(std::string(source), line, key, "already set on line " + std::to_string(it->second));
        }
        seen[key] = line;
        try {
            if (key.starts_with("column.") && key.size() > 7) {
                parse_column(c, key.substr(7), value);
            } else if (key.starts_with("delta.") && key.size() > 6) {
                c.run.deltas[key.substr(6)] = parse_real(value);
            } else {
                const auto h = handlers().find(key);
                if (h == handlers().end()) throw BadValue{"unknown key"};
                h->second(c, value);
            }
        } catch (const BadValue& b) {
            throw ConfigError(std::string(source), line, key, b.message);
        }
    }
    try {
        c.run.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(source) + ": " + e.what());
    }
    return c;
}

CliConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
    return parse_config(in, path.string());
}

std::vector<std::pair<std::string, std::string>> CliConfig::resolved() const
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& r : roles) {
        out.emplace_back("column." + r.name, to_string(r.role) + " " + to_string(r.kind));
    }
    out.emplace_back("k", std::to_string(run.k));
    out.emplace_back("seed", std::to_string(run.seed));
    out.emplace_back("workers", std::to_string(run.workers));
    out.emplace_back("delta", real_text(run.default_delta));
    for (const auto& [a, d] : run.deltas) out.emplace_back("delta." + a, real_text(d));
    out.emplace_back("direction", run.direction == ShiftDirection::up ? "up" : "down");
    out.emplace_back("lambda", real_text(run.lambda));
    out.emplace_back("epsilon", real_text(run.epsilon_frac));
    out.emplace_back("n_bins", run.n_bins ? std::to_string(*run.n_bins) : "none");
    out.emplace_back("adapt_delta", run.adapt_delta ? "true" : "false");
    std::string phi;
    for (auto m : run.phi_methods) phi += (phi.empty() ? "" : ",") + to_string(m);
    out.emplace_back("phi_methods", phi);
    out.emplace_back("discover_only", run.discover_only ? "true" : "false");
    if (!run.var_sets.empty()) {
        std::string vs;
        for (const auto& p : run.var_sets) vs += (vs.empty() ? "" : ",") + p.key();
        out.emplace_back("var_sets", vs);
    }
    out.emplace_back("f_quantile", real_text(run.discovery.f_quantile));
    out.emplace_back("alpha", real_text(run.alpha));
    out.emplace_back("heteroscedastic", run.nuisance.heteroscedastic ? "true" : "false");
    out.emplace_back("cv_folds", std::to_string(run.nuisance.cv.folds));
    out.emplace_back("discovery_library", library_text(run.discovery.library));
    out.emplace_back("discovery_outcome_library", library_text(run.discovery.outcome_library));
    out.emplace_back("outcome_library", library_text(run.nuisance.outcome_library));
    out.emplace_back("phi_library", library_text(run.nuisance.phi_library));
    out.emplace_back("density_library", library_text(run.nuisance.density.library));
    if (simulation.scenario) out.emplace_back("scenario", *simulation.scenario);
    if (simulation.scale) out.emplace_back("scale", *simulation.scale);
    if (simulation.iterations) out.emplace_back("iterations", std::to_string(*simulation.iterations));
    if (simulation.sample_sizes) {
        std::string s;
        for (auto n : *simulation.sample_sizes) s += (s.empty() ? "" : ",") + std::to_string(n);
        out.emplace_back("sample_sizes", s);
    }
    out.emplace_back("oracle_n", std::to_string(simulation.oracle_n));
    return out;
}

nlohmann::json CliConfig::to_json() const
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : resolved()) j[k] = v;
    return j;
}

} // namespace pathmed::cli
