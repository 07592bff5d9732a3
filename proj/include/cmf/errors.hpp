#pragma once

#include "cmf/types.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cmf {

/// Malformed input line (wrong field count, bad number, unknown id).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Byte-level decoding failure (raw control bytes inside a field).
class DecodeError : public std::runtime_error {
 public:
  DecodeError(std::string file, std::size_t byte_offset, const std::string& what)
      : std::runtime_error(file + ": byte " + std::to_string(byte_offset) + ": " + what),
        file_(std::move(file)),
        byte_offset_(byte_offset) {}

  const std::string& file() const { return file_; }
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::string file_;
  std::size_t byte_offset_;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged: the objective stayed non-finite after the step size
/// was reduced below 1e-12. Carries the trace accumulated so far.
class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, TrainTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}

  const TrainTrace& trace() const { return trace_; }

 private:
  TrainTrace trace_;
};

}  // namespace cmf
