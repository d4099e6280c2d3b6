#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace pricer::logs {

enum class Level { error = 0, info = 1, debug = 2 };

/// Threshold comes from CREDIT_PRICER_LOG in {error, info, debug}; default info.
inline Level threshold() {
    static const Level lv = [] {
        const char* env = std::getenv("CREDIT_PRICER_LOG");
        if (!env) return Level::info;
        const std::string_view s(env);
        if (s == "error") return Level::error;
        if (s == "debug") return Level::debug;
        return Level::info;
    }();
    return lv;
}

inline void emit(Level lv, std::string_view tag, std::string_view msg) {
    if (lv > threshold()) return;
    std::cerr << "[" << tag << "] " << msg << "\n";
}

inline void error(std::string_view msg) { emit(Level::error, "error", msg); }
inline void info(std::string_view msg) { emit(Level::info, "info", msg); }
inline void debug(std::string_view msg) { emit(Level::debug, "debug", msg); }

}  // namespace pricer::logs
