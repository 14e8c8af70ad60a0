#pragma once

#include <functional>
#include <string_view>

namespace caustics {

enum class LogLevel { Info, Warning };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink (default: stderr, warnings only) and
/// returns the previous one.
LogSink set_log_sink(LogSink sink);

void log_info(std::string_view msg);
void log_warning(std::string_view msg);

}  // namespace caustics
