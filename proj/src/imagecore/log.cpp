#include "caustics/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace caustics {

namespace {

std::mutex g_mutex;

LogSink& sink() {
  static LogSink s = [](LogLevel level, std::string_view msg) {
    if (level == LogLevel::Warning) std::cerr << "warning: " << msg << '\n';
  };
  return s;
}

void emit(LogLevel level, std::string_view msg) {
  std::lock_guard lock(g_mutex);
  if (sink()) sink()(level, msg);
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(g_mutex);
  return std::exchange(sink(), std::move(s));
}

void log_info(std::string_view msg) { emit(LogLevel::Info, msg); }
void log_warning(std::string_view msg) { emit(LogLevel::Warning, msg); }

}  // namespace caustics
