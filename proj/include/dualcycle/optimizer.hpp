#pragma once

// Inner optimizers over one stage (or the joint space): random search and a
// univariate Tree-structured Parzen Estimator. Both work in unit-cube
// coordinates and map proposals back through unit_cube_map.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "space.hpp"

namespace dualcycle {

struct Observation {
  Configuration cfg;
  double value = 0.0;
};

struct TpeSettings {
  double gamma = 0.25;
  std::size_t n_init = 5;
  std::size_t candidates = 24;
  double bandwidth_floor = 0.01;
  // Raise the floor to 1/min(100, n+1) for a density over n points, so small
  // good sets do not collapse onto one spot.
  bool adaptive_floor = true;
};

enum class OptimizerKind { random, tpe };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::tpe;
  TpeSettings tpe;
};

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::tpe ? "tpe" : "random"; }

class Optimizer {
 public:
  Optimizer(SpaceView view, std::uint64_t seed) : view_(std::move(view)), rng_(seed) {
    if (view_.empty()) throw std::invalid_argument("optimizer needs a non-empty parameter view");
  }
  virtual ~Optimizer() = default;

  virtual Configuration propose() = 0;

  void observe(Observation obs) {
    require_valid(view_, obs.cfg);
    history_.push_back(std::move(obs));
  }

  /// Places seed observations ahead of everything observed so far; they count
  /// toward any initial-design quota.
  void warm_start(std::vector<Observation> seeds) {
    for (const auto& s : seeds) require_valid(view_, s.cfg);
    history_.insert(history_.begin(), std::make_move_iterator(seeds.begin()), std::make_move_iterator(seeds.end()));
  }

  const std::vector<Observation>& history() const { return history_; }
  const SpaceView& view() const { return view_; }

 protected:
  Configuration uniform_proposal() {
    std::vector<double> u(view_.size());
    for (auto& x : u) x = rng_.uniform();
    return unit_cube_map(view_, u);
  }

  SpaceView view_;
  Rng rng_;
  std::vector<Observation> history_;
};

class RandomSearch final : public Optimizer {
 public:
  using Optimizer::Optimizer;
  Configuration propose() override { return uniform_proposal(); }
};

/// Indices of the good set (top ceil(gamma * n) by value; ties favor the more
/// recent observation) and the bad set (the rest), both best-first.
struct TpeSplit {
  std::vector<std::size_t> good;
  std::vector<std::size_t> bad;
};

inline TpeSplit tpe_split(std::span<const double> values, double gamma) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a > b;
  });
  auto n_good = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-9));
  n_good = std::clamp<std::size_t>(n_good, n == 0 ? 0 : 1, n);
  TpeSplit s;
  s.good.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_good));
  s.bad.assign(order.begin() + static_cast<std::ptrdiff_t>(n_good), order.end());
  return s;
}

/// Gaussian kernel density on [0, 1]: each kernel is truncated to the interval
/// and renormalized; bandwidth is Scott's rule n^(-1/5) * std with a floor.
class TruncatedKde {
 public:
  TruncatedKde(std::vector<double> points, double bandwidth_floor) : points_(std::move(points)) {
    if (points_.empty()) return;
    const double n = static_cast<double>(points_.size());
    const double m = std::accumulate(points_.begin(), points_.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : points_) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / n);
    bandwidth_ = std::max(bandwidth_floor, std::pow(n, -0.2) * sd);
    for (double mu : points_) mass_.push_back(normal_cdf((1.0 - mu) / bandwidth_) - normal_cdf(-mu / bandwidth_));
  }

  double bandwidth() const { return bandwidth_; }

  /// Uniform density when built from no points.
  double pdf(double x) const {
    if (points_.empty()) return 1.0;
    if (x < 0.0 || x > 1.0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const double z = (x - points_[i]) / bandwidth_;
      sum += std::exp(-0.5 * z * z) / (bandwidth_ * std::sqrt(2.0 * std::numbers::pi) * mass_[i]);
    }
    return sum / static_cast<double>(points_.size());
  }

  double sample(Rng& rng) const {
    if (points_.empty()) return rng.uniform();
    const double mu = points_[rng.below(points_.size())];
    double x = mu;
    bool accepted = false;
    for (int tries = 0; tries < 64 && !accepted; ++tries) {
      x = rng.normal(mu, bandwidth_);
      accepted = x >= 0.0 && x < 1.0;
    }
    if (!accepted) x = std::clamp(mu, 0.0, 1.0);
    return std::min(x, std::nextafter(1.0, 0.0));
  }

 private:
  static double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

  std::vector<double> points_;
  std::vector<double> mass_;
  double bandwidth_ = 1.0;
};

/// Add-one smoothed category frequencies.
inline std::vector<double> smoothed_frequencies(std::span<const std::size_t> categories, std::size_t m) {
  std::vector<double> p(m, 1.0);
  for (auto k : categories) p[k] += 1.0;
  const double total = static_cast<double>(categories.size() + m);
  for (auto& x : p) x /= total;
  return p;
}

class Tpe final : public Optimizer {
 public:
  Tpe(SpaceView view, std::uint64_t seed, TpeSettings settings = {})
      : Optimizer(std::move(view), seed), settings_(settings) {
    if (!(settings_.gamma > 0.0 && settings_.gamma <= 1.0)) throw std::invalid_argument("TPE gamma must be in (0, 1]");
    if (settings_.candidates == 0) throw std::invalid_argument("TPE needs at least one candidate");
  }

  const TpeSettings& settings() const { return settings_; }

  /// Number of proposals that came from the density model rather than the
  /// initial uniform design.
  std::size_t model_proposals() const { return model_proposals_; }

  Configuration propose() override {
    if (history_.size() < settings_.n_init) return uniform_proposal();
    ++model_proposals_;

    std::vector<double> values;
    std::vector<std::vector<double>> coords;
    for (const auto& obs : history_) {
      values.push_back(obs.value);
      coords.push_back(to_unit(view_, obs.cfg));
    }
    const auto split = tpe_split(values, settings_.gamma);

    struct Dimension {
      bool categorical = false;
      std::size_t m = 0;
      std::vector<double> good_p, bad_p;
      TruncatedKde good{{}, 0.01}, bad{{}, 0.01};
    };
    std::vector<Dimension> dims(view_.size());
    for (std::size_t d = 0; d < view_.size(); ++d) {
      const auto& p = view_.params[d];
      auto& dim = dims[d];
      if (const auto* cats = std::get_if<Categories>(&p.kind)) {
        dim.categorical = true;
        dim.m = cats->values.size();
        std::vector<std::size_t> g, b;
        for (auto i : split.good) g.push_back(category_index(p, history_[i].cfg.at(p.name)));
        for (auto i : split.bad) b.push_back(category_index(p, history_[i].cfg.at(p.name)));
        dim.good_p = smoothed_frequencies(g, dim.m);
        dim.bad_p = smoothed_frequencies(b, dim.m);
      } else {
        std::vector<double> g, b;
        for (auto i : split.good) g.push_back(std::clamp(coords[i][d], 0.0, 1.0));
        for (auto i : split.bad) b.push_back(std::clamp(coords[i][d], 0.0, 1.0));
        dim.good = TruncatedKde(g, floor_for(g.size()));
        dim.bad = TruncatedKde(b, floor_for(b.size()));
      }
    }

    std::vector<double> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < settings_.candidates; ++c) {
      std::vector<double> u(view_.size());
      double score = 0.0;
      for (std::size_t d = 0; d < view_.size(); ++d) {
        auto& dim = dims[d];
        if (dim.categorical) {
          double r = rng_.uniform();
          std::size_t k = 0;
          while (k + 1 < dim.m && r >= dim.good_p[k]) r -= dim.good_p[k++];
          u[d] = (static_cast<double>(k) + 0.5) / static_cast<double>(dim.m);
          score += std::log(dim.good_p[k]) - std::log(dim.bad_p[k]);
        } else {
          u[d] = dim.good.sample(rng_);
          score += std::log(std::max(dim.good.pdf(u[d]), 1e-300)) - std::log(std::max(dim.bad.pdf(u[d]), 1e-300));
        }
      }
      if (score > best_score) {
        best_score = score;
        best = std::move(u);
      }
    }
    return unit_cube_map(view_, best);
  }

 private:
  double floor_for(std::size_t n) const {
    if (!settings_.adaptive_floor) return settings_.bandwidth_floor;
    return std::max(settings_.bandwidth_floor, 1.0 / std::min(100.0, static_cast<double>(n) + 1.0));
  }

  TpeSettings settings_;
  std::size_t model_proposals_ = 0;
};

inline std::unique_ptr<Optimizer> make_optimizer(const OptimizerSettings& settings, SpaceView view,
                                                 std::uint64_t seed) {
  if (settings.kind == OptimizerKind::tpe) return std::make_unique<Tpe>(std::move(view), seed, settings.tpe);
  return std::make_unique<RandomSearch>(std::move(view), seed);
}

}  // namespace dualcycle
