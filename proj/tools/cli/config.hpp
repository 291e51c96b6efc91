#pragma once

#include <pathmed/crossfit.hpp>
#include <pathmed/data_model.hpp>
#include <pathmed/error.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pathmed::cli {

/// A config problem tied to a line and key of the source document.
class ConfigError : public ValidationError {
public:
    ConfigError(std::string source, int line, std::string field, const std::string& message);

    const std::string& field() const { return field_; }
    int line() const { return line_; }

private:
    int line_;
    std::string field_;
};

struct SimulationSettings {
    std::optional<std::string> scenario;
    std::optional<std::string> scale;
    std::optional<int> iterations;
    std::optional<std::vector<std::size_t>> sample_sizes;
    std::size_t oracle_n = 100000;
};

/// Everything one flat key = value file can set. A single file drives
/// analyze, discover and simulate; keys a command does not use are ignored.
struct CliConfig {
    RunConfig run;
    RoleConfig roles;
    SimulationSettings simulation;
    bool seed_given = false;
    bool workers_given = false;

    /// Effective settings as key = value pairs in the file's own syntax.
    std::vector<std::pair<std::string, std::string>> resolved() const;
    nlohmann::json to_json() const;
};

CliConfig parse_config(std::istream& in, std::string_view source = "<config>");
CliConfig load_config(const std::filesystem::path& path);

} // namespace pathmed::cli
