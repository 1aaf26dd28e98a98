#include "playertrack/core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace playertrack::log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

void emit(Level at, const char* tag, std::string_view message) {
    if (at < g_level.load()) return;
    std::lock_guard lock(g_mutex);
    std::cerr << "[" << tag << "] " << message << '\n';
}
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level.load(); }

void debug(std::string_view message) { emit(Level::debug, "debug", message); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void warn(std::string_view message) { emit(Level::warn, "warn", message); }
void error(std::string_view message) { emit(Level::error, "error", message); }

}  // namespace playertrack::log
