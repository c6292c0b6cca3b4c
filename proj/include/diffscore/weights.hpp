#pragma once

// Learns per-timestep profile weights on the simplex by maximizing the
// Spearman correlation between weighted profile scores and human judgments,
// with k-fold cross-validated diagnostics.
//
// Optimizer: from each start point, jump to the best simplex vertex if it
// beats the start, then repeat pairwise line searches that move mass between
// two coordinates until no move improves the objective by more than 1e-6.
// Start points are the uniform vector followed by random Dirichlet(1) draws.
// Ties between restarts go to the solution closest to uniform.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/rng.hpp"
#include "diffscore/scoring.hpp"
#include "diffscore/stats.hpp"

namespace diffscore {

struct WeightLearningOptions {
  std::size_t folds = 5;
  std::size_t restarts = 50;
  std::uint64_t seed = 0;
  double min_improvement = 1e-6;
};

struct LearnedWeights {
  std::vector<double> grid;
  std::vector<double> weights;
  std::vector<double> fold_rho;  // held-out Spearman per fold
  double objective = 0.0;        // fold-mean Spearman of the final weights on all data
};

namespace detail {

class SimplexObjective {
 public:
  SimplexObjective(const std::vector<std::vector<double>>& scores, std::span<const double> human,
                   std::vector<std::vector<std::size_t>> groups)
      : scores_(scores), human_(human.begin(), human.end()), groups_(std::move(groups)) {}

  // Mean over groups of Spearman(weighted score, human); undefined groups
  // contribute 0.
  double operator()(std::span<const double> w) const {
    double total = 0.0;
    std::vector<double> xs, ys;
    for (const auto& g : groups_) {
      xs.clear();
      ys.clear();
      for (std::size_t i : g) {
        double s = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * scores_[i][k];
        xs.push_back(s);
        ys.push_back(human_[i]);
      }
      if (xs.size() >= 2) total += spearman_rho(xs, ys).value_or(0.0);
    }
    return groups_.empty() ? 0.0 : total / static_cast<double>(groups_.size());
  }

 private:
  const std::vector<std::vector<double>>& scores_;
  std::vector<double> human_;
  std::vector<std::vector<std::size_t>> groups_;
};

inline std::vector<double> dirichlet_one(Rng& rng, std::size_t T) {
  std::vector<double> w(T);
  double sum = 0.0;
  for (auto& x : w) {
    x = -std::log1p(-rng.uniform());
    sum += x;
  }
  for (auto& x : w) x /= sum;
  return w;
}

inline double distance_to_uniform(std::span<const double> w) {
  const double u = 1.0 / static_cast<double>(w.size());
  double d = 0.0;
  for (double x : w) d += (x - u) * (x - u);
  return d;
}

inline std::pair<std::vector<double>, double> local_search(const SimplexObjective& f, std::vector<double> w,
                                                           double min_improvement) {
  const std::size_t T = w.size();
  double best = f(w);
  for (std::size_t v = 0; v < T; ++v) {
    std::vector<double> vertex(T, 0.0);
    vertex[v] = 1.0;
    const double val = f(vertex);
    if (val > best + min_improvement) {
      best = val;
      w = vertex;
    }
  }
  constexpr std::array<double, 7> kFractions{1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01};
  constexpr int kMaxSweeps = 200;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool improved = false;
    for (std::size_t to = 0; to < T; ++to) {
      for (std::size_t from = 0; from < T; ++from) {
        if (from == to || w[from] <= 0.0) continue;
        for (double frac : kFractions) {
          std::vector<double> cand = w;
          const double delta = frac * w[from];
          cand[from] -= delta;
          cand[to] += delta;
          if (frac == 1.0) cand[from] = 0.0;
          const double val = f(cand);
          if (val > best + min_improvement) {
            best = val;
            w = std::move(cand);
            improved = true;
            break;
          }
        }
      }
    }
    if (!improved) break;
  }
  return {std::move(w), best};
}

inline std::vector<double> optimize_weights(const SimplexObjective& f, std::size_t T, const WeightLearningOptions& opt,
                                            std::uint64_t stream) {
  Rng rng(derive_seed(opt.seed, stream));
  std::vector<double> best_w;
  double best_val = -std::numeric_limits<double>::infinity();
  const std::size_t starts = std::max<std::size_t>(1, opt.restarts);
  for (std::size_t r = 0; r < starts; ++r) {
    std::vector<double> start = r == 0 ? std::vector<double>(T, 1.0 / static_cast<double>(T)) : dirichlet_one(rng, T);
    auto [w, val] = local_search(f, std::move(start), opt.min_improvement);
    const bool better = val > best_val + 1e-12;
    const bool tie = std::abs(val - best_val) <= 1e-12 && distance_to_uniform(w) < distance_to_uniform(best_w);
    if (best_w.empty() || better || tie) {
      best_val = val;
      best_w = std::move(w);
    }
  }
  return best_w;
}

}  // namespace detail

inline LearnedWeights learn_weights(std::span<const QualityProfile> profiles, std::span<const double> human_scores,
                                    const WeightLearningOptions& opt = {}) {
  if (profiles.size() != human_scores.size()) {
    throw Error(ErrorKind::LengthMismatch, "profile and human score counts differ");
  }
  if (opt.folds < 2) throw Error(ErrorKind::InvalidConfig, "need at least 2 folds");
  if (profiles.size() < 2 * opt.folds) {
    throw Error(ErrorKind::TooFewSamples, "need at least " + std::to_string(2 * opt.folds) + " samples for " +
                                              std::to_string(opt.folds) + " folds");
  }
  const TimestepGrid& grid = profiles.front().timesteps;
  const std::size_t T = grid.count();
  std::vector<std::vector<double>> scores;
  scores.reserve(profiles.size());
  for (const auto& p : profiles) {
    if (!(p.timesteps == grid) || p.scores.size() != T) throw Error(ErrorKind::GridMismatch, "profiles use different grids");
    scores.push_back(p.scores);
  }

  const std::size_t n = profiles.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(opt.seed, 0xf01d));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
  std::vector<std::vector<std::size_t>> folds(opt.folds);
  for (std::size_t i = 0; i < n; ++i) folds[i % opt.folds].push_back(order[i]);

  LearnedWeights out;
  out.grid = grid.values;
  for (std::size_t f = 0; f < opt.folds; ++f) {
    std::vector<std::vector<std::size_t>> train;
    for (std::size_t g = 0; g < opt.folds; ++g) {
      if (g != f) train.push_back(folds[g]);
    }
    const detail::SimplexObjective train_obj(scores, human_scores, std::move(train));
    const auto w = detail::optimize_weights(train_obj, T, opt, f + 1);
    const detail::SimplexObjective held_out(scores, human_scores, {folds[f]});
    out.fold_rho.push_back(held_out(w));
  }
  const detail::SimplexObjective all(scores, human_scores, folds);
  out.weights = detail::optimize_weights(all, T, opt, 0);
  out.objective = all(out.weights);
  return out;
}

}  // namespace diffscore
