#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace pathmed::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEstimation = 3;

struct Options {
    std::filesystem::path data;
    std::filesystem::path config;
    std::filesystem::path out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> scenario;
    std::optional<std::string> scale;
};

/// Each command returns an exit status and reports problems on `err`.
int cmd_analyze(const Options& options, std::ostream& err);
int cmd_discover(const Options& options, std::ostream& err);
int cmd_simulate(const Options& options, std::ostream& err);

} // namespace pathmed::cli
