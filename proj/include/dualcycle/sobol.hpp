#pragma once

// Base-2 Sobol sequence with nested uniform (Owen) scrambling.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "space.hpp"

namespace dualcycle {

namespace sobol_detail {

struct PrimitivePolynomial {
  unsigned degree;
  unsigned coefficients;  // interior coefficients, leading and trailing 1 omitted
  std::array<std::uint32_t, 7> initial;  // m_1 .. m_degree
};

// Joe-Kuo direction numbers for dimensions 2..32 (dimension 1 is the van der Corput sequence).
inline constexpr std::array<PrimitivePolynomial, 31> kPolynomials{{
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
    {7, 7, {1, 1, 3, 13, 7, 35, 63}},
    {7, 8, {1, 3, 5, 9, 1, 25, 53}},
    {7, 14, {1, 3, 1, 13, 9, 35, 107}},
    {7, 19, {1, 3, 1, 5, 27, 61, 31}},
    {7, 21, {1, 1, 5, 11, 19, 41, 61}},
    {7, 28, {1, 3, 5, 3, 3, 13, 69}},
    {7, 31, {1, 1, 7, 13, 1, 19, 1}},
    {7, 32, {1, 3, 7, 5, 13, 19, 59}},
    {7, 37, {1, 1, 3, 9, 25, 29, 41}},
    {7, 41, {1, 3, 5, 13, 23, 1, 55}},
    {7, 42, {1, 3, 7, 3, 13, 59, 17}},
}};

inline constexpr unsigned kBits = 32;

using DirectionTable = std::array<std::array<std::uint32_t, kBits>, 32>;

constexpr DirectionTable make_directions() {
  DirectionTable v{};
  for (unsigned k = 0; k < kBits; ++k) v[0][k] = 1u << (kBits - 1 - k);
  for (unsigned d = 1; d < 32; ++d) {
    const auto& poly = kPolynomials[d - 1];
    const unsigned s = poly.degree;
    for (unsigned k = 0; k < s; ++k) v[d][k] = poly.initial[k] << (kBits - 1 - k);
    for (unsigned k = s; k < kBits; ++k) {
      std::uint32_t x = v[d][k - s] ^ (v[d][k - s] >> s);
      for (unsigned j = 1; j < s; ++j)
        if ((poly.coefficients >> (s - 1 - j)) & 1u) x ^= v[d][k - j];
      v[d][k] = x;
    }
  }
  return v;
}

inline constexpr DirectionTable kDirections = make_directions();

}  // namespace sobol_detail

/// Raw 32-bit digits of coordinate `dim` of Sobol point `index` (Gray-code order).
constexpr std::uint32_t sobol_digits(std::uint64_t index, std::size_t dim) {
  const std::uint64_t gray = index ^ (index >> 1);
  std::uint32_t x = 0;
  for (unsigned k = 0; k < sobol_detail::kBits; ++k)
    if ((gray >> k) & 1u) x ^= sobol_detail::kDirections[dim][k];
  return x;
}

/// Nested uniform scramble of 32 base-2 digits. The flip applied to digit l
/// depends on (seed, dim, l, the l preceding original digits), so points that
/// share an elementary interval before scrambling still share one afterwards.
inline std::uint32_t owen_scramble(std::uint32_t digits, std::uint64_t seed, std::size_t dim) {
  const std::uint64_t dim_key = hash_combine(seed, dim);
  std::uint32_t out = 0;
  for (unsigned level = 0; level < sobol_detail::kBits; ++level) {
    const unsigned shift = sobol_detail::kBits - level;
    const std::uint64_t prefix = (shift >= 32) ? 0 : (digits >> shift);
    const std::uint64_t h = hash_combine(dim_key, (static_cast<std::uint64_t>(level) << 32) | prefix);
    const std::uint32_t bit = (digits >> (shift - 1)) & 1u;
    out |= (bit ^ static_cast<std::uint32_t>(h & 1u)) << (shift - 1);
  }
  return out;
}

/// A cursor over the Sobol sequence in [0,1)^d.
///
/// Unscrambled streams start at index 1 (the origin is skipped); scrambled
/// streams start at index 0 because the scrambled origin is an ordinary point
/// and aligned blocks of 2^m points then form exact nets.
class SobolStream {
 public:
  static constexpr std::size_t max_dimension = 32;

  SobolStream(std::size_t dimension, std::optional<std::uint64_t> scramble_seed)
      : dimension_(dimension), seed_(scramble_seed), next_index_(scramble_seed ? 0 : 1) {
    if (dimension == 0 || dimension > max_dimension)
      throw std::invalid_argument("Sobol dimension must be in [1, 32], got " + std::to_string(dimension));
  }

  std::size_t dimension() const { return dimension_; }
  std::optional<std::uint64_t> scramble_seed() const { return seed_; }
  std::uint64_t next_index() const { return next_index_; }

  std::vector<double> point_at(std::uint64_t index) const {
    std::vector<double> p(dimension_);
    for (std::size_t d = 0; d < dimension_; ++d) {
      std::uint32_t digits = sobol_digits(index, d);
      if (seed_) digits = owen_scramble(digits, *seed_, d);
      p[d] = static_cast<double>(digits) * 0x1.0p-32;
    }
    return p;
  }

  std::vector<double> next_point() { return point_at(next_index_++); }

 private:
  std::size_t dimension_;
  std::optional<std::uint64_t> seed_;
  std::uint64_t next_index_;
};

inline Configuration next_retriever_config(SobolStream& stream, const SearchSpace& space) {
  const auto view = space.retriever_view();
  if (view.empty()) throw std::invalid_argument("search space has no retriever parameters");
  if (stream.dimension() != view.size())
    throw std::invalid_argument("Sobol stream dimension does not match the retriever view");
  const auto point = stream.next_point();
  return unit_cube_map(view, point);
}

}  // namespace dualcycle
