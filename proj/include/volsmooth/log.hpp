#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace volsmooth {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

inline std::atomic<int>& log_level_ref() {
    static std::atomic<int> level{static_cast<int>(LogLevel::Warn)};
    return level;
}

inline void set_log_level(LogLevel level) { log_level_ref() = static_cast<int>(level); }

inline void log_warn(std::string_view msg) {
    if (log_level_ref() >= static_cast<int>(LogLevel::Warn)) std::cerr << "warning: " << msg << '\n';
}

inline void log_info(std::string_view msg) {
    if (log_level_ref() >= static_cast<int>(LogLevel::Info)) std::cerr << msg << '\n';
}

}  // namespace volsmooth
