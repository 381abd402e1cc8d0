#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace subcond {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DensityUnavailable : UnsupportedError {
  using UnsupportedError::UnsupportedError;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

// 1/Gamma(x), zero at the poles 0,-1,-2,...
inline double reciprocal_gamma(double x) {
  if (x <= 0.0 && x == std::floor(x)) return 0.0;
  return 1.0 / std::tgamma(x);
}

}  // namespace subcond
