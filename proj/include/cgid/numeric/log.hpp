#pragma once

#include <string_view>

namespace cgid::log {

enum class Level { debug = 0, info = 1, warning = 2, silent = 3 };

void set_level(Level level);
Level level();
// Accepts debug, info, warning and silent; throws ConfigError otherwise.
Level parse_level(std::string_view name);

void debug(std::string_view message);
void info(std::string_view message);
void warning(std::string_view message);

// Number of warnings emitted since process start; lets tests observe logged fallbacks.
unsigned long warning_count();

}  // namespace cgid::log
