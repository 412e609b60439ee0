#pragma once

// The two-stage black box being tuned: retrieve(phi) -> contexts + P,
// generate(theta, contexts) -> M. Every call reports its cost.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "space.hpp"

namespace dualcycle {

struct RetrievalResult {
  std::string context_handle;
  double precision = 0.0;
  double cost = 0.0;
};

struct GenerationResult {
  double quality = 0.0;
  double cost = 0.0;
};

struct EnvironmentInfo {
  SearchSpace space;
  std::size_t query_count = 0;
  double retrieve_cost_hint = 1.0;
  double generate_cost_hint = 2.0;
};

/// Raised when the environment itself misbehaves (crashed adapter, malformed
/// reply, timeout). The optimization loop aborts on it.
class EnvironmentFault : public std::runtime_error {
 public:
  explicit EnvironmentFault(const std::string& what) : std::runtime_error(what) {}
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvironmentInfo& info() const = 0;

  RetrievalResult retrieve(const Configuration& phi, std::uint64_t run_seed) {
    require_valid(info().space.retriever_view(), phi);
    ++retrieve_calls_;
    auto r = do_retrieve(phi, run_seed);
    if (!(r.precision >= 0.0 && r.precision <= 1.0))
      throw EnvironmentFault("retrieval precision outside [0, 1]: " + std::to_string(r.precision));
    if (!(r.cost > 0.0)) throw EnvironmentFault("retrieval reported non-positive cost");
    return r;
  }

  GenerationResult generate(const Configuration& theta, const std::string& handle, std::uint64_t run_seed) {
    require_valid(info().space.generator_view(), theta);
    ++generate_calls_;
    auto g = do_generate(theta, handle, run_seed);
    if (!(g.quality >= 0.0 && g.quality <= 1.0))
      throw EnvironmentFault("generation quality outside [0, 1]: " + std::to_string(g.quality));
    if (!(g.cost > 0.0)) throw EnvironmentFault("generation reported non-positive cost");
    return g;
  }

  /// Drops cached contexts; later generate calls with the handle fail.
  virtual void release(const std::string& /*handle*/) {}

  std::size_t retrieve_calls() const { return retrieve_calls_; }
  std::size_t generate_calls() const { return generate_calls_; }

 protected:
  virtual RetrievalResult do_retrieve(const Configuration& phi, std::uint64_t run_seed) = 0;
  virtual GenerationResult do_generate(const Configuration& theta, const std::string& handle,
                                       std::uint64_t run_seed) = 0;

 private:
  std::size_t retrieve_calls_ = 0;
  std::size_t generate_calls_ = 0;
};

/// Thrown for a handle that was never issued or has been released.
class UnknownContext : public std::invalid_argument {
 public:
  explicit UnknownContext(const std::string& handle)
      : std::invalid_argument("unknown or evicted context handle '" + handle + "'") {}
};

}  // namespace dualcycle
