#pragma once

// Meta-evaluation statistics: rank and linear correlations, pairwise
// accuracy, the Williams test for dependent correlations, percentile
// bootstrap intervals, Mann-Whitney U and system-level aggregation.
//
// Correlations return std::nullopt where the statistic is undefined (a
// constant input, or all pairs tied).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/numeric.hpp"
#include "diffscore/rng.hpp"
#include "diffscore/special_functions.hpp"

namespace diffscore {

enum class Statistic { kendall_tau_b, spearman_rho, pearson_r, pairwise_accuracy };

inline const char* to_string(Statistic s) {
  switch (s) {
    case Statistic::kendall_tau_b: return "kendall_tau_b";
    case Statistic::spearman_rho: return "spearman_rho";
    case Statistic::pearson_r: return "pearson_r";
    case Statistic::pairwise_accuracy: return "pairwise_accuracy";
  }
  return "unknown";
}

struct CorrelationReport {
  Statistic statistic = Statistic::spearman_rho;
  double value = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
  std::size_t n = 0;
  std::optional<double> ci_low, ci_high;
  std::optional<double> p_value;
};

namespace detail {

inline void check_paired(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(x.size()) + " vs " + std::to_string(y.size()) + " values");
  }
  if (x.size() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 paired values");
}

inline double clamp_unit(double r) { return std::clamp(r, -1.0, 1.0); }

}  // namespace detail

// 1-based ranks; tied values share the mean of their ranks.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
  detail::check_paired(x, y);
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return detail::clamp_unit(sxy / std::sqrt(sxx * syy));
}

inline std::optional<double> spearman_rho(std::span<const double> x, std::span<const double> y) {
  detail::check_paired(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson_r(rx, ry);
}

namespace detail {

// Number of tied pairs within runs of equal values of a sorted sequence.
template <class Eq>
std::uint64_t tied_pairs(std::size_t n, Eq equal_to_prev) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (equal_to_prev(i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

// Merge sort counting inversions (strictly decreasing pairs).
inline std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

}  // namespace detail

// Kendall's tau-b in O(n log n) (Knight's algorithm).
inline std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y) {
  detail::check_paired(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t ties_x = detail::tied_pairs(n, [&](std::size_t i) { return x[order[i]] == x[order[i - 1]]; });
  const std::uint64_t ties_xy = detail::tied_pairs(n, [&](std::size_t i) {
    return x[order[i]] == x[order[i - 1]] && y[order[i]] == y[order[i - 1]];
  });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::uint64_t discordant = detail::count_inversions(ys, buf, 0, n);
  const std::uint64_t ties_y = detail::tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });

  // The integer product is exact below 2^53, so this rounds once before the sqrt.
  const double denom = std::sqrt(static_cast<double>(n0 - ties_x) * static_cast<double>(n0 - ties_y));
  if (denom <= 0.0) return std::nullopt;
  // concordant - discordant = n0 - tx - ty + txy - 2 * discordant
  const double numer = static_cast<double>(n0) - static_cast<double>(ties_x) - static_cast<double>(ties_y) +
                       static_cast<double>(ties_xy) - 2.0 * static_cast<double>(discordant);
  return detail::clamp_unit(numer / denom);
}

struct RankedPair {
  std::size_t better = 0;
  std::size_t worse = 0;
};

// Fraction of labelled pairs ordered correctly by `scores`; ties count half.
inline double pairwise_accuracy(std::span<const double> scores, std::span<const RankedPair> labels) {
  if (labels.empty()) throw Error(ErrorKind::InsufficientData, "no labelled pairs");
  double hits = 0.0;
  for (const auto& p : labels) {
    if (p.better >= scores.size() || p.worse >= scores.size()) {
      throw Error(ErrorKind::LengthMismatch, "pair index out of range");
    }
    if (scores[p.better] > scores[p.worse]) {
      hits += 1.0;
    } else if (scores[p.better] == scores[p.worse]) {
      hits += 0.5;
    }
  }
  return hits / static_cast<double>(labels.size());
}

struct WilliamsResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  double p_one_sided = 0.5;  // P(T >= t): evidence that r12 > r13
};

// Williams' test for r12 vs r13 where variables 2 and 3 are both correlated
// with variable 1 over the same n items and r23 is their mutual correlation.
inline WilliamsResult williams_test(double r12, double r13, double r23, std::size_t n) {
  if (n < 4) throw Error(ErrorKind::InsufficientData, "Williams test needs n >= 4");
  for (double r : {r12, r13, r23}) {
    if (!(r > -1.0 && r < 1.0)) throw Error(ErrorKind::DegenerateInput, "correlations must lie strictly in (-1, 1)");
  }
  const double nn = static_cast<double>(n);
  const double det = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
  if (!(det > 0.0)) throw Error(ErrorKind::DegenerateInput, "correlation matrix is not positive definite");
  const double rbar = 0.5 * (r12 + r13);
  const double one_minus = 1.0 - r23;
  const double denom = 2.0 * ((nn - 1.0) / (nn - 3.0)) * det + rbar * rbar * one_minus * one_minus * one_minus;
  WilliamsResult out;
  out.df = nn - 3.0;
  out.t = (r12 - r13) * std::sqrt(((nn - 1.0) * (1.0 + r23)) / denom);
  out.p_two_sided = student_t_two_sided_p(out.t, out.df);
  out.p_one_sided = student_t_upper_p(out.t, out.df);
  return out;
}

using CorrelationFn = std::function<std::optional<double>(std::span<const double>, std::span<const double>)>;

struct BootstrapInterval {
  double low = std::numeric_limits<double>::quiet_NaN();
  double high = std::numeric_limits<double>::quiet_NaN();
  std::size_t resamples_used = 0;
  std::size_t resamples_skipped = 0;
  // Set when fewer than the requested resamples could be drawn.
  bool flagged = false;
};

// Linear interpolation between order statistics of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Percentile bootstrap over (metric, human) pairs. Resamples whose human
// scores are constant, or whose statistic is undefined, are redrawn; at most
// 10x `resamples` draws are attempted.
inline BootstrapInterval bootstrap_ci(std::span<const double> metric, std::span<const double> human,
                                      const CorrelationFn& statistic, std::size_t resamples = 1000,
                                      double level = 0.95, std::uint64_t seed = 0) {
  detail::check_paired(metric, human);
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::InvalidConfig, "confidence level must lie in (0, 1)");
  const std::size_t n = metric.size();
  std::vector<double> stats;
  stats.reserve(resamples);
  std::vector<double> xs(n), ys(n);
  BootstrapInterval out;
  const std::size_t max_draws = 10 * resamples;
  for (std::size_t draw = 0; draw < max_draws && stats.size() < resamples; ++draw) {
    Rng rng(derive_seed(seed, draw));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = rng.index(n);
      xs[i] = metric[j];
      ys[i] = human[j];
    }
    const bool constant_human = std::all_of(ys.begin(), ys.end(), [&](double v) { return v == ys[0]; });
    std::optional<double> s;
    if (!constant_human) s = statistic(xs, ys);
    if (!s || std::isnan(*s)) {
      ++out.resamples_skipped;
      continue;
    }
    stats.push_back(*s);
  }
  out.resamples_used = stats.size();
  out.flagged = stats.size() < resamples;
  if (stats.empty()) return out;
  std::sort(stats.begin(), stats.end());
  out.low = quantile_sorted(stats, (1.0 - level) / 2.0);
  out.high = quantile_sorted(stats, 1.0 - (1.0 - level) / 2.0);
  return out;
}

struct MannWhitneyResult {
  double U = 0.0;  // statistic for the first sample
  double p_value = 1.0;
  bool exact = false;
};

inline constexpr std::size_t kMannWhitneyExactLimit = 12;

// Two-sided test. Exact permutation distribution when |a| + |b| <= 12,
// otherwise the tie-corrected normal approximation with continuity
// correction.
inline MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::InsufficientData, "both samples must be non-empty");
  const std::size_t na = a.size(), nb = b.size(), N = na + nb;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = average_ranks(pooled);
  const double offset = static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;
  double ra = 0.0;
  for (std::size_t i = 0; i < na; ++i) ra += ranks[i];

  MannWhitneyResult out;
  out.U = ra - offset;
  const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
  const double dev = std::abs(out.U - mu);

  if (N <= kMannWhitneyExactLimit) {
    out.exact = true;
    std::uint64_t extreme = 0, total = 0;
    for (std::uint32_t mask = 0; mask < (1u << N); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != na) continue;
      double r = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        if (mask & (1u << i)) r += ranks[i];
      }
      ++total;
      if (std::abs(r - offset - mu) >= dev - 1e-9) ++extreme;
    }
    out.p_value = static_cast<double>(extreme) / static_cast<double>(total);
    return out;
  }

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < N;) {
    std::size_t j = i;
    while (j + 1 < N && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double nn = static_cast<double>(N);
  const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (!(var > 0.0)) {
    out.p_value = 1.0;
    return out;
  }
  const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
  out.p_value = std::min(1.0, 2.0 * normal_upper_p(z));
  return out;
}

struct SystemScore {
  std::string system_id;
  double mean_metric = 0.0;
  double mean_human = 0.0;
  std::size_t count = 0;
};

struct SystemRecord {
  std::string system_id;
  double metric = 0.0;
  double human = 0.0;
};

// One row per system, ordered by system id.
inline std::vector<SystemScore> system_level_aggregate(std::span<const SystemRecord> records) {
  std::map<std::string, std::pair<RunningMean, RunningMean>> acc;
  for (const auto& r : records) {
    auto& [m, h] = acc[r.system_id];
    m.add(r.metric);
    h.add(r.human);
  }
  std::vector<SystemScore> out;
  out.reserve(acc.size());
  for (const auto& [id, mh] : acc) out.push_back({id, mh.first.mean, mh.second.mean, mh.first.count});
  return out;
}

// Point estimate plus percentile bootstrap interval.
inline CorrelationReport correlate(Statistic stat, std::span<const double> metric, std::span<const double> human,
                                   std::size_t resamples = 1000, double level = 0.95, std::uint64_t seed = 0) {
  CorrelationFn fn;
  switch (stat) {
    case Statistic::kendall_tau_b: fn = [](auto x, auto y) { return kendall_tau(x, y); }; break;
    case Statistic::spearman_rho: fn = [](auto x, auto y) { return spearman_rho(x, y); }; break;
    case Statistic::pearson_r: fn = [](auto x, auto y) { return pearson_r(x, y); }; break;
    case Statistic::pairwise_accuracy:
      throw Error(ErrorKind::InvalidConfig, "pairwise accuracy is not a paired correlation");
  }
  CorrelationReport rep;
  rep.statistic = stat;
  rep.n = metric.size();
  auto v = fn(metric, human);
  rep.defined = v.has_value();
  if (v) rep.value = *v;
  if (resamples > 0) {
    auto ci = bootstrap_ci(metric, human, fn, resamples, level, seed);
    if (ci.resamples_used > 0) {
      rep.ci_low = ci.low;
      rep.ci_high = ci.high;
    }
  }
  return rep;
}

}  // namespace diffscore
