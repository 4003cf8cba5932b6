#pragma once

#include <stdexcept>
#include <string>

namespace dynsurf {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

struct MissingInput : Error {
  explicit MissingInput(const std::string& msg) : Error(msg) {}
};

struct CorruptFrame : Error {
  explicit CorruptFrame(const std::string& msg) : Error(msg) {}
};

struct IoFailure : Error {
  explicit IoFailure(const std::string& msg) : Error(msg) {}
};

struct EmptyGeometry : Error {
  explicit EmptyGeometry(const std::string& msg) : Error(msg) {}
};

struct UnknownScenario : Error {
  explicit UnknownScenario(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace dynsurf
