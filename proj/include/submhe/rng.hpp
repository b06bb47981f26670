#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "submhe/linalg.hpp"

namespace submhe {

/// Seeded 64-bit generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; the conversions to doubles are
/// done here rather than through <random> distributions, whose algorithms
/// are implementation-defined.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal (Marsaglia polar method).
  double normal();

  VectorXd uniform_in(const Box& box);
  VectorXd uniform_vector(Index n, double lo, double hi);
  VectorXd normal_vector(Index n);
  /// Uniform on the unit sphere in R^n.
  VectorXd unit_vector(Index n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace submhe
