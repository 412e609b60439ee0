#pragma once

// Analytic two-stage surface with a tunable link between retrieval quality
// and end-to-end quality.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "environment.hpp"
#include "rng.hpp"

namespace dualcycle {

struct SyntheticParams {
  double link_strength = 0.9;  // lambda in [0, 1]
  double sigma_r = 0.01;
  double sigma_g = 0.02;
  std::size_t modes = 3;
  double mode_width_lo = 0.5;
  double mode_width_hi = 0.8;
  double bump_width = 1.5;
  double category_step = 0.05;  // category offsets are 0, -step, -2*step, ... shuffled
  std::uint64_t instance_seed = 1;
  double retrieve_cost = 1.0;
  double generate_cost = 2.0;
};

/// Concrete surface drawn from SyntheticParams.
struct SyntheticInstance {
  std::vector<std::vector<double>> centers;  // modes x |Phi|
  std::vector<double> widths;                // per mode
  std::vector<double> bump_center;           // |Theta|
  double bump_width = 1.5;
  // offsets[i][k]: additive offset of category k of the i-th retriever parameter
  // (empty for non-categorical parameters).
  std::vector<std::vector<double>> category_offsets;
  double link_strength = 0.9;
  double sigma_r = 0.0;
  double sigma_g = 0.0;
};

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

/// Noise-free multimodal retrieval surface: max over modes of a Gaussian bump.
inline double synthetic_p_clean(std::span<const double> phi_unit, const SyntheticInstance& inst) {
  double best = 0.0;
  for (std::size_t j = 0; j < inst.centers.size(); ++j) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < phi_unit.size(); ++i) {
      const double diff = phi_unit[i] - inst.centers[j][i];
      d2 += diff * diff;
    }
    best = std::max(best, std::exp(-d2 / (inst.widths[j] * inst.widths[j])));
  }
  return best;
}

/// P = clamp01(max_j exp(-|phi - c_j|^2 / w_j^2) + offset + sigma_r * z).
inline double synthetic_p(std::span<const double> phi_unit, double category_offset, double z,
                          const SyntheticInstance& inst) {
  return clamp01(synthetic_p_clean(phi_unit, inst) + category_offset + inst.sigma_r * z);
}

inline double synthetic_bump(std::span<const double> theta_unit, const SyntheticInstance& inst) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < theta_unit.size(); ++i) {
    const double diff = theta_unit[i] - inst.bump_center[i];
    d2 += diff * diff;
  }
  return std::exp(-d2 / (inst.bump_width * inst.bump_width));
}

/// M = clamp01(lambda * P * g(theta) + (1 - lambda) * g(theta) + sigma_g * z).
inline double synthetic_m(double p, std::span<const double> theta_unit, double z, const SyntheticInstance& inst) {
  const double g = synthetic_bump(theta_unit, inst);
  const double lambda = inst.link_strength;
  return clamp01(lambda * p * g + (1.0 - lambda) * g + inst.sigma_g * z);
}

inline SyntheticInstance make_synthetic_instance(const SyntheticParams& params, const SearchSpace& space) {
  const auto phi = space.retriever_view();
  const auto theta = space.generator_view();
  Rng rng(derive_seed(params.instance_seed, "synthetic-instance"));
  SyntheticInstance inst;
  for (std::size_t j = 0; j < params.modes; ++j) {
    std::vector<double> c(phi.size());
    for (auto& x : c) x = rng.uniform(0.15, 0.85);
    inst.centers.push_back(std::move(c));
    inst.widths.push_back(rng.uniform(params.mode_width_lo, params.mode_width_hi));
  }
  inst.bump_center.resize(theta.size());
  for (auto& x : inst.bump_center) x = rng.uniform(0.15, 0.85);
  inst.bump_width = params.bump_width;
  for (const auto& p : phi.params) {
    std::vector<double> offsets;
    if (const auto* cats = std::get_if<Categories>(&p.kind)) {
      for (std::size_t k = 0; k < cats->values.size(); ++k)
        offsets.push_back(-params.category_step * static_cast<double>(k));
      for (std::size_t k = offsets.size(); k > 1; --k) std::swap(offsets[k - 1], offsets[rng.below(k)]);
    }
    inst.category_offsets.push_back(std::move(offsets));
  }
  inst.link_strength = params.link_strength;
  inst.sigma_r = params.sigma_r;
  inst.sigma_g = params.sigma_g;
  return inst;
}

class SyntheticEnvironment final : public Environment {
 public:
  SyntheticEnvironment(SyntheticParams params, SearchSpace space)
      : params_(params), instance_(make_synthetic_instance(params, space)) {
    space.require_both_stages();
    info_.space = std::move(space);
    info_.query_count = 1;
    info_.retrieve_cost_hint = params.retrieve_cost;
    info_.generate_cost_hint = params.generate_cost;
  }

  SyntheticEnvironment(SyntheticParams params, SearchSpace space, SyntheticInstance instance)
      : SyntheticEnvironment(params, std::move(space)) {
    instance_ = std::move(instance);
  }

  const EnvironmentInfo& info() const override { return info_; }
  const SyntheticInstance& instance() const { return instance_; }

  double category_offset(const Configuration& phi) const {
    const auto view = info_.space.retriever_view();
    double offset = 0.0;
    for (std::size_t i = 0; i < view.size(); ++i) {
      if (instance_.category_offsets[i].empty()) continue;
      offset += instance_.category_offsets[i][category_index(view.params[i], phi.at(view.params[i].name))];
    }
    return offset;
  }

  void release(const std::string& handle) override { contexts_.erase(handle); }
  std::size_t live_contexts() const { return contexts_.size(); }

 protected:
  RetrievalResult do_retrieve(const Configuration& phi, std::uint64_t run_seed) override {
    const auto view = info_.space.retriever_view();
    const auto u = to_unit(view, phi);
    const auto key = canonical_key(phi);
    Rng noise(hash_combine(hash_combine(params_.instance_seed, run_seed), fnv1a(key)));
    const double p = synthetic_p(u, category_offset(phi), noise.normal(), instance_);
    std::string handle = "ctx-" + std::to_string(++issued_);
    contexts_[handle] = Context{p, key};
    return {handle, p, params_.retrieve_cost};
  }

  GenerationResult do_generate(const Configuration& theta, const std::string& handle,
                               std::uint64_t run_seed) override {
    const auto it = contexts_.find(handle);
    if (it == contexts_.end()) throw UnknownContext(handle);
    const auto u = to_unit(info_.space.generator_view(), theta);
    Rng noise(hash_combine(hash_combine(hash_combine(params_.instance_seed, run_seed), fnv1a(it->second.phi_key)),
                           fnv1a(canonical_key(theta))));
    const double m = synthetic_m(it->second.precision, u, noise.normal(), instance_);
    return {m, params_.generate_cost};
  }

 private:
  struct Context {
    double precision;
    std::string phi_key;
  };

  SyntheticParams params_;
  SyntheticInstance instance_;
  EnvironmentInfo info_;
  std::map<std::string, Context> contexts_;
  std::size_t issued_ = 0;
};

}  // namespace dualcycle
