#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unreduce {

enum class Errc {
  InvalidArgument,
  AngleNearPi,
  FlowNotDiffeomorphic,
  NonFiniteState,
  NonFiniteResidual,
  SingularInertia,
  SingularMetric,
  NoConvergence,
  DimensionMismatch,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::AngleNearPi: return "AngleNearPi";
    case Errc::FlowNotDiffeomorphic: return "FlowNotDiffeomorphic";
    case Errc::NonFiniteState: return "NonFiniteState";
    case Errc::NonFiniteResidual: return "NonFiniteResidual";
    case Errc::SingularInertia: return "SingularInertia";
    case Errc::SingularMetric: return "SingularMetric";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::DimensionMismatch: return "DimensionMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace unreduce
