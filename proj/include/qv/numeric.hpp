#pragma once

#include <cmath>
#include <span>

namespace qv {

// Neumaier compensated accumulator. Table values are sums of many tiny
// products, so plain accumulation loses digits once |V| grows large.
struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + comp; }
};

inline double compensated_total(std::span<const double> xs) {
  NeumaierSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

}  // namespace qv
