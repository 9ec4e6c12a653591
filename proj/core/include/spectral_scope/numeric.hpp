#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace spectral_scope {

// Neumaier compensated summation. Results do not depend on the grouping of
// the addends beyond the last ulp, which keeps aggregated means stable.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) noexcept {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

inline double mean(std::span<const double> values) noexcept {
  return compensated_sum(values) / static_cast<double>(values.size());
}

}  // namespace spectral_scope
