#pragma once

#include <concepts>
#include <cstdint>
#include <random>
#include <span>

namespace activeid {

/// Anything that can hand out standard normal draws. Simulation routines
/// are templated on this so tests can substitute deterministic stubs.
template <class G>
concept NormalSource = requires(G& g) {
  { g.normal() } -> std::convertible_to<double>;
};

/// Seedable generator. Two generators built from the same (seed, stream)
/// pair produce identical sequences.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }

  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }

  /// Index drawn with probability proportional to `weights`.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double target = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (target < acc) return i;
    }
    // Rounding can leave target == total; fall back to the last positive weight.
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    return 0;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Independent streams owned by one Monte Carlo run. Process noise, random
/// excitation and estimate sampling never share draws, so two strategies run
/// with the same seed see the same noise realisation.
struct RunStreams {
  explicit RunStreams(std::uint64_t seed) : noise(seed, 1), input(seed, 2), sampling(seed, 3) {}

  Rng noise;
  Rng input;
  Rng sampling;
};

}  // namespace activeid
