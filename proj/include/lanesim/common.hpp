#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace lanesim {

/// Base class for all lanesim errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON/CSV syntax, missing keys, wrong types).
struct ParseError : Error {
  using Error::Error;
};

/// Structurally invalid network or config; message names the offending element.
struct ValidationError : Error {
  std::string element;
  ValidationError(std::string elem, const std::string& what)
      : Error(what), element(std::move(elem)) {}
};

struct InvalidParam : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// No turn-connected path between two edges.
struct Unreachable : Error {
  std::string origin;
  std::string destination;
  Unreachable(std::string o, std::string d)
      : Error("no route from edge '" + o + "' to edge '" + d + "'"),
        origin(std::move(o)),
        destination(std::move(d)) {}
};

struct EmptyNetworkInterval : Error {
  using Error::Error;
};

struct EmptyMfd : Error {
  using Error::Error;
};

struct MissingBaseline : Error {
  using Error::Error;
};

/// printf-style formatting into a std::string (libstdc++ 11 has no std::format).
inline std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[512];
  int n = std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  if (n < 0) return {};
  if (static_cast<size_t>(n) < sizeof(buf)) return std::string(buf, n);
  std::string big(static_cast<size_t>(n) + 1, '\0');
  va_start(args, fmt);
  std::vsnprintf(big.data(), big.size(), fmt, args);
  va_end(args);
  big.resize(static_cast<size_t>(n));
  return big;
}

/// Compact, locale-independent number rendering for CSV output.
inline std::string num_str(double v) {
  return strfmt("%.12g", v);
}

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("LANESIM_LOG");
    if (!env) return LogLevel::info;
    std::string s(env);
    if (s == "error") return LogLevel::error;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

inline void log_msg(LogLevel lvl, const std::string& msg) {
  if (lvl > log_level()) return;
  const char* tag = lvl == LogLevel::error ? "error" : (lvl == LogLevel::info ? "info" : "debug");
  std::fprintf(stderr, "[lanesim %s] %s\n", tag, msg.c_str());
}

inline void log_error(const std::string& m) { log_msg(LogLevel::error, m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::info, m); }
inline void log_debug(const std::string& m) { log_msg(LogLevel::debug, m); }

}  // namespace lanesim
