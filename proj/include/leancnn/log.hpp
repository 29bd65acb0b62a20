#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace leancnn {

using LogSink = std::function<void(const std::string&)>;

inline LogSink& warning_sink() {
  static LogSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

inline void log_warning(const std::string& msg) {
  static std::mutex m;
  std::lock_guard lock(m);
  if (warning_sink()) warning_sink()(msg);
}

}  // namespace leancnn
