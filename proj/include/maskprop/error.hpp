#pragma once

#include <stdexcept>
#include <string>

namespace maskprop {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct EmptyMaskError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct InfeasibleSpecError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace maskprop
