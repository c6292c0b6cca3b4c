#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace diffscore {

// Incremental mean. A constant stream yields that constant bit-exactly, which
// plain sum-then-divide does not guarantee.
struct RunningMean {
  double mean = 0.0;
  std::size_t count = 0;

  void add(double x) {
    ++count;
    mean += (x - mean) / static_cast<double>(count);
  }
};

// Weighted incremental mean; zero-weight terms are skipped so a one-hot weight
// vector returns the selected value exactly.
struct WeightedRunningMean {
  double mean = 0.0;
  double total_weight = 0.0;

  void add(double x, double w) {
    if (w <= 0.0) return;
    total_weight += w;
    mean += (w / total_weight) * (x - mean);
  }
};

inline double mean_of(std::span<const double> xs) {
  RunningMean m;
  for (double x : xs) m.add(x);
  return m.mean;
}

// ddof = 0 for a population standard deviation, 1 for the sample estimate.
inline double stddev_of(std::span<const double> xs, int ddof = 0) {
  if (xs.size() <= static_cast<std::size_t>(ddof)) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - ddof));
}

}  // namespace diffscore
