#pragma once

// Mixed float/integer/categorical search spaces split into a retriever
// stage and a generator stage, plus configuration encoding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace dualcycle {

enum class Stage { retriever, generator };
enum class Scope { retriever, generator, joint };

inline const char* to_string(Stage s) { return s == Stage::retriever ? "retriever" : "generator"; }

inline const char* to_string(Scope s) {
  switch (s) {
    case Scope::retriever: return "retriever";
    case Scope::generator: return "generator";
    case Scope::joint: return "joint";
  }
  return "?";
}

struct FloatRange {
  double lo;
  double hi;

  friend bool operator==(const FloatRange&, const FloatRange&) = default;
};

struct IntRange {
  std::int64_t lo;
  std::int64_t hi;

  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct Categories {
  std::vector<std::string> values;

  friend bool operator==(const Categories&, const Categories&) = default;
};

using ParamKind = std::variant<FloatRange, IntRange, Categories>;
using ParamValue = std::variant<double, std::int64_t, std::string>;

struct ParamSpec {
  std::string name;
  ParamKind kind;
  Stage stage;

  /// Throws std::invalid_argument when the bounds or value list are malformed.
  void check() const {
    if (name.empty()) throw std::invalid_argument("parameter with empty name");
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, FloatRange>) {
            if (!(std::isfinite(k.lo) && std::isfinite(k.hi)) || !(k.lo < k.hi))
              throw std::invalid_argument(name + ": float range requires lo < hi");
          } else if constexpr (std::is_same_v<K, IntRange>) {
            if (k.lo > k.hi) throw std::invalid_argument(name + ": integer range requires lo <= hi");
          } else {
            if (k.values.empty()) throw std::invalid_argument(name + ": empty categorical list");
            std::set<std::string> seen(k.values.begin(), k.values.end());
            if (seen.size() != k.values.size())
              throw std::invalid_argument(name + ": duplicate categorical values");
          }
        },
        kind);
  }

  friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct Assignment {
  std::string name;
  ParamValue value;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// One value per parameter of a scoped view. Assignment order follows the
/// view's parameter order when produced by this library.
struct Configuration {
  Scope scope = Scope::joint;
  std::vector<Assignment> assignments;

  const ParamValue* find(std::string_view name) const {
    for (const auto& a : assignments)
      if (a.name == name) return &a.value;
    return nullptr;
  }

  const ParamValue& at(std::string_view name) const {
    if (const auto* v = find(name)) return *v;
    throw std::out_of_range("configuration has no parameter '" + std::string(name) + "'");
  }

  double as_float(std::string_view name) const {
    const auto& v = at(name);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    throw std::invalid_argument(std::string(name) + " is not numeric");
  }

  std::int64_t as_int(std::string_view name) const {
    const auto& v = at(name);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    throw std::invalid_argument(std::string(name) + " is not an integer");
  }

  const std::string& as_category(std::string_view name) const {
    const auto& v = at(name);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    throw std::invalid_argument(std::string(name) + " is not categorical");
  }

  friend bool operator==(const Configuration&, const Configuration&) = default;
};

/// Ordered subset of a search space: Phi, Theta, or the joint Omega.
struct SpaceView {
  Scope scope = Scope::joint;
  std::vector<ParamSpec> params;

  std::size_t size() const { return params.size(); }
  bool empty() const { return params.empty(); }

  const ParamSpec* find(std::string_view name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
};

class SearchSpace {
 public:
  SearchSpace() = default;

  explicit SearchSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
    std::set<std::string> names;
    for (const auto& p : params_) {
      p.check();
      if (!names.insert(p.name).second)
        throw std::invalid_argument("duplicate parameter name '" + p.name + "'");
    }
  }

  const std::vector<ParamSpec>& params() const { return params_; }

  SpaceView view(Scope scope) const {
    SpaceView v{scope, {}};
    for (const auto& p : params_) {
      if (scope == Scope::joint || (scope == Scope::retriever && p.stage == Stage::retriever) ||
          (scope == Scope::generator && p.stage == Stage::generator))
        v.params.push_back(p);
    }
    return v;
  }

  SpaceView retriever_view() const { return view(Scope::retriever); }
  SpaceView generator_view() const { return view(Scope::generator); }
  SpaceView joint_view() const { return view(Scope::joint); }

  /// Dual-sequential optimization needs at least one parameter per stage.
  void require_both_stages() const {
    if (retriever_view().empty() || generator_view().empty())
      throw std::invalid_argument("search space needs at least one retriever and one generator parameter");
  }

 private:
  std::vector<ParamSpec> params_;
};

/// Empty result means the configuration is valid for the view.
inline std::vector<std::string> validate(const SpaceView& view, const Configuration& cfg) {
  std::vector<std::string> violations;
  if (cfg.scope != view.scope)
    violations.push_back(std::string("scope mismatch: configuration is ") + to_string(cfg.scope) +
                         ", view is " + to_string(view.scope));
  std::set<std::string> seen;
  for (const auto& a : cfg.assignments) {
    if (!seen.insert(a.name).second) violations.push_back(a.name + ": assigned more than once");
    if (!view.find(a.name)) violations.push_back(a.name + ": unknown parameter");
  }
  for (const auto& p : view.params) {
    const ParamValue* v = cfg.find(p.name);
    if (!v) {
      violations.push_back(p.name + ": unassigned parameter");
      continue;
    }
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, FloatRange>) {
            double x = 0.0;
            if (const auto* d = std::get_if<double>(v)) {
              x = *d;
            } else if (const auto* i = std::get_if<std::int64_t>(v)) {
              x = static_cast<double>(*i);
            } else {
              violations.push_back(p.name + ": expected a float value");
              return;
            }
            if (!std::isfinite(x))
              violations.push_back(p.name + ": value is not finite");
            else if (x < k.lo)
              violations.push_back(p.name + ": below lower bound " + std::to_string(k.lo));
            else if (x > k.hi)
              violations.push_back(p.name + ": above upper bound " + std::to_string(k.hi));
          } else if constexpr (std::is_same_v<K, IntRange>) {
            const auto* i = std::get_if<std::int64_t>(v);
            if (!i)
              violations.push_back(p.name + ": expected an integer value");
            else if (*i < k.lo)
              violations.push_back(p.name + ": below lower bound " + std::to_string(k.lo));
            else if (*i > k.hi)
              violations.push_back(p.name + ": above upper bound " + std::to_string(k.hi));
          } else {
            const auto* s = std::get_if<std::string>(v);
            if (!s)
              violations.push_back(p.name + ": expected a categorical value");
            else if (std::find(k.values.begin(), k.values.end(), *s) == k.values.end())
              violations.push_back(p.name + ": '" + *s + "' is not an allowed value");
          }
        },
        p.kind);
  }
  return violations;
}

inline std::vector<std::string> validate(const SearchSpace& space, const Configuration& cfg) {
  return validate(space.view(cfg.scope), cfg);
}

inline void require_valid(const SpaceView& view, const Configuration& cfg) {
  const auto violations = validate(view, cfg);
  if (violations.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& v : violations) msg += " " + v + ";";
  throw std::invalid_argument(msg);
}

/// Maps one unit-interval coordinate to a parameter value. Integers and
/// categories own equal-measure sub-intervals of [0, 1).
inline ParamValue map_unit(const ParamSpec& p, double u) {
  return std::visit(
      [&](const auto& k) -> ParamValue {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, FloatRange>) {
          return k.lo + u * (k.hi - k.lo);
        } else if constexpr (std::is_same_v<K, IntRange>) {
          const double width = static_cast<double>(k.hi - k.lo + 1);
          const auto offset = static_cast<std::int64_t>(std::floor(u * width));
          return std::min(k.lo + offset, k.hi);
        } else {
          const auto m = k.values.size();
          const auto idx = std::min(static_cast<std::size_t>(std::floor(u * static_cast<double>(m))), m - 1);
          return k.values[idx];
        }
      },
      p.kind);
}

inline Configuration unit_cube_map(const SpaceView& view, std::span<const double> point) {
  if (point.size() != view.size())
    throw std::invalid_argument("unit_cube_map: point has dimension " + std::to_string(point.size()) +
                                ", view has " + std::to_string(view.size()));
  Configuration cfg{view.scope, {}};
  cfg.assignments.reserve(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    const double u = point[i];
    if (!(u >= 0.0 && u < 1.0))
      throw std::invalid_argument("unit_cube_map: coordinate " + std::to_string(i) + " outside [0, 1)");
    cfg.assignments.push_back({view.params[i].name, map_unit(view.params[i], u)});
  }
  return cfg;
}

/// Inverse of map_unit: floats map affinely, integers and categories to the
/// midpoint of the sub-interval they own.
inline double to_unit(const ParamSpec& p, const ParamValue& v) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, FloatRange>) {
          const double x = std::holds_alternative<double>(v) ? std::get<double>(v)
                                                             : static_cast<double>(std::get<std::int64_t>(v));
          return (x - k.lo) / (k.hi - k.lo);
        } else if constexpr (std::is_same_v<K, IntRange>) {
          const auto x = std::get<std::int64_t>(v);
          return (static_cast<double>(x - k.lo) + 0.5) / static_cast<double>(k.hi - k.lo + 1);
        } else {
          const auto& s = std::get<std::string>(v);
          const auto idx = static_cast<std::size_t>(std::find(k.values.begin(), k.values.end(), s) - k.values.begin());
          return (static_cast<double>(idx) + 0.5) / static_cast<double>(k.values.size());
        }
      },
      p.kind);
}

inline std::vector<double> to_unit(const SpaceView& view, const Configuration& cfg) {
  std::vector<double> u;
  u.reserve(view.size());
  for (const auto& p : view.params) u.push_back(to_unit(p, cfg.at(p.name)));
  return u;
}

inline std::size_t category_index(const ParamSpec& p, const ParamValue& v) {
  const auto& values = std::get<Categories>(p.kind).values;
  return static_cast<std::size_t>(std::find(values.begin(), values.end(), std::get<std::string>(v)) -
                                  values.begin());
}

/// Identity for de-duplication: integers and categories compare exactly,
/// floats after rounding to 12 significant digits.
inline std::string canonical_key(const Configuration& cfg) {
  std::string key;
  for (const auto& a : cfg.assignments) {
    if (!key.empty()) key += '|';
    key += a.name;
    key += '=';
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, double>) {
            char buf[40];
            const double y = (x == 0.0) ? 0.0 : x;  // folds -0.0
            std::snprintf(buf, sizeof buf, "f:%.11e", y);
            key += buf;
          } else if constexpr (std::is_same_v<T, std::int64_t>) {
            key += "i:" + std::to_string(x);
          } else {
            key += "c:" + std::to_string(x.size()) + ":" + x;
          }
        },
        a.value);
  }
  return key;
}

/// Restricts a joint configuration to one stage's view.
inline Configuration restrict_to(const SpaceView& view, const Configuration& cfg) {
  Configuration out{view.scope, {}};
  for (const auto& p : view.params) out.assignments.push_back({p.name, cfg.at(p.name)});
  return out;
}

inline Configuration join(const SearchSpace& space, const Configuration& retriever,
                          const Configuration& generator) {
  Configuration out{Scope::joint, {}};
  for (const auto& p : space.params()) {
    const auto& src = p.stage == Stage::retriever ? retriever : generator;
    out.assignments.push_back({p.name, src.at(p.name)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON encoding

inline nlohmann::json to_json(const ParamValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

inline nlohmann::json to_json(const Configuration& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& a : cfg.assignments) j[a.name] = to_json(a.value);
  return j;
}

/// Reads {name: value} in view order; type coercion follows the ParamSpec.
/// Missing or mistyped entries throw; validate() is still required for bounds.
inline Configuration config_from_json(const SpaceView& view, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("configuration must be a JSON object");
  for (const auto& [name, _] : j.items())
    if (!view.find(name)) throw std::invalid_argument("configuration names unknown parameter '" + name + "'");
  Configuration cfg{view.scope, {}};
  for (const auto& p : view.params) {
    if (!j.contains(p.name)) throw std::invalid_argument(p.name + ": unassigned parameter");
    const auto& x = j.at(p.name);
    ParamValue v = std::visit(
        [&](const auto& k) -> ParamValue {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, FloatRange>) {
            if (!x.is_number()) throw std::invalid_argument(p.name + ": expected a number");
            return x.get<double>();
          } else if constexpr (std::is_same_v<K, IntRange>) {
            if (!x.is_number_integer()) throw std::invalid_argument(p.name + ": expected an integer");
            return x.get<std::int64_t>();
          } else {
            if (!x.is_string()) throw std::invalid_argument(p.name + ": expected a string");
            return x.get<std::string>();
          }
        },
        p.kind);
    cfg.assignments.push_back({p.name, std::move(v)});
  }
  return cfg;
}

inline nlohmann::json to_json(const ParamSpec& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["stage"] = to_string(p.stage);
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, FloatRange>) {
          j["type"] = "float";
          j["range"] = {k.lo, k.hi};
        } else if constexpr (std::is_same_v<K, IntRange>) {
          j["type"] = "integer";
          j["range"] = {k.lo, k.hi};
        } else {
          j["type"] = "categorical";
          j["values"] = k.values;
        }
      },
      p.kind);
  return j;
}

inline ParamSpec param_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("parameter spec must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "name" && key != "stage" && key != "type" && key != "range" && key != "values")
      throw std::invalid_argument("parameter spec has unknown key '" + key + "'");
  ParamSpec p;
  p.name = j.at("name").get<std::string>();
  const auto stage = j.at("stage").get<std::string>();
  if (stage == "retriever")
    p.stage = Stage::retriever;
  else if (stage == "generator")
    p.stage = Stage::generator;
  else
    throw std::invalid_argument(p.name + ": stage must be 'retriever' or 'generator'");
  const auto type = j.at("type").get<std::string>();
  if (type == "float") {
    const auto& r = j.at("range");
    if (!r.is_array() || r.size() != 2) throw std::invalid_argument(p.name + ": range must be [lo, hi]");
    p.kind = FloatRange{r[0].get<double>(), r[1].get<double>()};
  } else if (type == "integer") {
    const auto& r = j.at("range");
    if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer())
      throw std::invalid_argument(p.name + ": integer range must be [lo, hi] integers");
    p.kind = IntRange{r[0].get<std::int64_t>(), r[1].get<std::int64_t>()};
  } else if (type == "categorical") {
    p.kind = Categories{j.at("values").get<std::vector<std::string>>()};
  } else {
    throw std::invalid_argument(p.name + ": unknown type '" + type + "'");
  }
  p.check();
  return p;
}

inline nlohmann::json to_json(const SearchSpace& space) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : space.params()) j.push_back(to_json(p));
  return j;
}

inline SearchSpace space_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("space must be an array of parameter specs");
  std::vector<ParamSpec> params;
  for (const auto& item : j) params.push_back(param_spec_from_json(item));
  return SearchSpace(std::move(params));
}

/// The 12-parameter retrieval-augmented generation space: seven retriever
/// knobs and five generator knobs.
inline SearchSpace default_rag_space() {
  using S = Stage;
  return SearchSpace({
      {"Database Choice", Categories{{"DuckDB", "Chroma", "FAISS"}}, S::retriever},
      {"Chunk Size", IntRange{256, 1024}, S::retriever},
      {"Chunk Overlap", IntRange{32, 128}, S::retriever},
      {"Embedding Temperature", FloatRange{0.0, 1.0}, S::retriever},
      {"Embedding Window", IntRange{512, 2048}, S::retriever},
      {"Embedding Repeat Penalty", FloatRange{0.9, 1.5}, S::retriever},
      {"Embedding Top-k", IntRange{10, 100}, S::retriever},
      {"Retrieval Numbers", IntRange{1, 10}, S::generator},
      {"Generation Temperature", FloatRange{0.0, 1.0}, S::generator},
      {"Generation Window", IntRange{512, 8192}, S::generator},
      {"Generation Repeat Penalty", FloatRange{0.9, 1.5}, S::generator},
      {"Generation Top-k", IntRange{10, 100}, S::generator},
  });
}

}  // namespace dualcycle
