#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dualcycle/dualcycle.hpp"

namespace dualcycle::testing {

inline SearchSpace small_space() {
  return SearchSpace({
      {"r_float", FloatRange{0.0, 1.0}, Stage::retriever},
      {"r_int", IntRange{1, 8}, Stage::retriever},
      {"g_float", FloatRange{0.0, 1.0}, Stage::generator},
      {"g_cat", Categories{{"a", "b", "c"}}, Stage::generator},
  });
}

/// Environment driven by plain functions of the unit coordinates, with a
/// transcript of every call.
class ScriptedEnvironment final : public Environment {
 public:
  using PFn = std::function<double(const std::vector<double>&)>;
  using MFn = std::function<double(const std::vector<double>&, double)>;

  ScriptedEnvironment(SearchSpace space, PFn p, MFn m, double retrieve_cost = 1.0, double generate_cost = 2.0)
      : p_(std::move(p)), m_(std::move(m)) {
    info_.space = std::move(space);
    info_.query_count = 1;
    info_.retrieve_cost_hint = retrieve_cost;
    info_.generate_cost_hint = generate_cost;
  }

  const EnvironmentInfo& info() const override { return info_; }
  void release(const std::string& handle) override {
    transcript.push_back("release " + handle);
    live_.erase(handle);
  }

  std::vector<std::string> transcript;
  std::size_t live() const { return live_.size(); }

 protected:
  RetrievalResult do_retrieve(const Configuration& phi, std::uint64_t) override {
    const double p = p_(to_unit(info_.space.retriever_view(), phi));
    const std::string h = "h" + std::to_string(++issued_);
    live_[h] = p;
    transcript.push_back("retrieve " + h);
    return {h, p, info_.retrieve_cost_hint};
  }

  GenerationResult do_generate(const Configuration& theta, const std::string& handle, std::uint64_t) override {
    const auto it = live_.find(handle);
    if (it == live_.end()) throw UnknownContext(handle);
    transcript.push_back("generate " + handle);
    return {m_(to_unit(info_.space.generator_view(), theta), it->second), info_.generate_cost_hint};
  }

 private:
  EnvironmentInfo info_;
  PFn p_;
  MFn m_;
  std::map<std::string, double> live_;
  std::size_t issued_ = 0;
};

/// Centered L2 discrepancy (Hickernell), squared value's square root.
inline double centered_l2_discrepancy(const std::vector<std::vector<double>>& pts) {
  const std::size_t n = pts.size();
  const std::size_t d = pts.front().size();
  double a = std::pow(13.0 / 12.0, static_cast<double>(d));
  double b = 0.0;
  for (const auto& x : pts) {
    double prod = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double z = std::abs(x[k] - 0.5);
      prod *= 1.0 + 0.5 * z - 0.5 * z * z;
    }
    b += prod;
  }
  double c = 0.0;
  for (const auto& x : pts) {
    for (const auto& y : pts) {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k)
        prod *= 1.0 + 0.5 * std::abs(x[k] - 0.5) + 0.5 * std::abs(y[k] - 0.5) - 0.5 * std::abs(x[k] - y[k]);
      c += prod;
    }
  }
  const double nn = static_cast<double>(n);
  return std::sqrt(a - 2.0 / nn * b + c / (nn * nn));
}

/// Synthetic settings used by the comparative suites.
inline RunSettings suite_settings(MethodKind method, std::uint64_t seed, double budget = 300.0) {
  RunSettings s;
  s.method = method;
  s.seed = seed;
  s.budget = budget;
  return s;
}

inline SyntheticParams suite_instance(double lambda, double sigma_g, std::uint64_t instance_seed) {
  SyntheticParams p;
  p.link_strength = lambda;
  p.sigma_g = sigma_g;
  p.instance_seed = instance_seed;
  return p;
}

}  // namespace dualcycle::testing
