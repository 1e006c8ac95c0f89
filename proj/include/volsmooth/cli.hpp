#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace volsmooth::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kDataError = 3,
    kNumericError = 4,
    kValidationFailed = 5,
};

/// Entry point for the volsmooth command line; returns the process exit code.
int run_cli(int argc, char** argv);

/// FNV-1a over the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

}  // namespace volsmooth::cli
