#include "spectral_scope/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

#include "spectral_scope/error.hpp"

namespace spectral_scope {

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler() {
  static WarningHandler h = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(handler_mutex());
  return std::exchange(handler(), std::move(h));
}

void warn(const std::string& message) {
  std::lock_guard lock(handler_mutex());
  if (handler()) handler()(message);
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation:
      return "validation";
    case ErrorKind::degenerate:
      return "degenerate";
    case ErrorKind::io:
      return "io";
  }
  return "unknown";
}

}  // namespace spectral_scope
