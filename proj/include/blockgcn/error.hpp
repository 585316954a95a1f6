#pragma once

#include <stdexcept>
#include <string>

namespace blockgcn {

// Error categories. The CLI maps each category onto a distinct exit code,
// see tools/main.cpp.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ValueError : Error {
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

struct TopologyError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace blockgcn
