#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dkaft {

/// Deterministic random source. Wraps mt19937_64 (whose output sequence is
/// pinned by the standard) and does all distribution transforms itself, so
/// streams are reproducible across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  /// Uniform in [0, 1).
  double uniform01();

  /// Uniform in (0, 1]; safe to pass to log().
  double uniform_open01();

  /// Standard normal via Box-Muller (one spare cached).
  double normal();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::vector<double> normal_vec(std::size_t n);

  /// Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<std::size_t>& v);

  /// m distinct indices drawn uniformly from [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

private:
  std::uint64_t next_raw();

  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  std::uint64_t draws_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dkaft
