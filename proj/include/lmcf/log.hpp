#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include <fmt/chrono.h>
#include <fmt/core.h>

namespace lmcf {

// LMCF_LOG = 0 (silent, default), 1 (info) or 2 (debug). Log lines carry a
// timestamp and go to stderr only, never into result artifacts.
inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("LMCF_LOG");
    return env ? std::atoi(env) : 0;
  }();
  return level;
}

template <class... Args>
void log_at(int level, fmt::format_string<Args...> format, Args&&... args) {
  if (log_level() < level) return;
  const auto now = std::chrono::system_clock::now();
  fmt::print(stderr, "[{:%H:%M:%S}] {}\n", fmt::localtime(std::chrono::system_clock::to_time_t(now)),
             fmt::format(format, std::forward<Args>(args)...));
}

template <class... Args>
void log_info(fmt::format_string<Args...> format, Args&&... args) {
  log_at(1, format, std::forward<Args>(args)...);
}

template <class... Args>
void log_debug(fmt::format_string<Args...> format, Args&&... args) {
  log_at(2, format, std::forward<Args>(args)...);
}

}  // namespace lmcf
