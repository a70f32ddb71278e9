#pragma once

#include <stdexcept>
#include <string>

namespace topopt {

// Malformed input file (bad JSON, missing or mistyped field).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// A model invariant is violated; the message names the offending element.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A listed contingency disconnects the base-case graph.
struct IslandedContingency : std::runtime_error {
  explicit IslandedContingency(const std::string& msg) : std::runtime_error(msg) {}
};

// The nodal susceptance system cannot be factorized (disconnected grid).
struct SingularSystem : std::runtime_error {
  explicit SingularSystem(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace topopt
