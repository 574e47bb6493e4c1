#include "cgid/numeric/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

#include "cgid/errors.hpp"

namespace cgid::log {
namespace {

std::atomic<Level> g_level{Level::warning};
std::atomic<unsigned long> g_warnings{0};
std::mutex g_mutex;

void emit(Level at, std::string_view tag, std::string_view message) {
  if (at < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[" << tag << "] " << message << '\n';
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

Level parse_level(std::string_view name) {
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warning") return Level::warning;
  if (name == "silent") return Level::silent;
  throw ConfigError("unknown log level '" + std::string(name) + "'", "log_level");
}

void debug(std::string_view message) { emit(Level::debug, "debug", message); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void warning(std::string_view message) {
  ++g_warnings;
  emit(Level::warning, "warn", message);
}

unsigned long warning_count() { return g_warnings.load(); }

}  // namespace cgid::log
