#pragma once

#include <stdexcept>
#include <string>

namespace rpnn {

// Every exception thrown by the library carries a short machine-parseable
// class name so the CLI can report "error: <class>: <message>" on one line.
class Error : public std::runtime_error {
 public:
  Error(std::string error_class, const std::string& what)
      : std::runtime_error(what), class_(std::move(error_class)) {}

  const std::string& error_class() const noexcept { return class_; }

 private:
  std::string class_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format_error", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string& what) : Error("value_error", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

}  // namespace rpnn
