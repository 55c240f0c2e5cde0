#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "sigsurv/error.hpp"

namespace sigsurv {

/// Right-continuous step function: `initial` before the first knot, then
/// values[k] on [times[k], times[k+1]).
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(double initial, std::vector<double> times, std::vector<double> values)
      : initial_(initial), times_(std::move(times)), values_(std::move(values)) {
    if (times_.size() != values_.size()) throw Error("StepFunction: knot/value size mismatch");
    if (!std::is_sorted(times_.begin(), times_.end()) ||
        std::adjacent_find(times_.begin(), times_.end()) != times_.end()) {
      throw Error("StepFunction: knots must be strictly increasing");
    }
  }

  double operator()(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return initial_;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  /// Value of the left limit f(t-).
  double left_limit(double t) const {
    const auto it = std::lower_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return initial_;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  double initial() const noexcept { return initial_; }
  std::span<const double> times() const noexcept { return times_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return times_.size(); }

  friend bool operator==(const StepFunction&, const StepFunction&) = default;

 private:
  double initial_ = 0.0;
  std::vector<double> times_;
  std::vector<double> values_;
};

}  // namespace sigsurv
