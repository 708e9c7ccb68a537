#pragma once

#include <cstdint>
#include <span>

namespace nutnet::stats {

/// Probability that a random `positive` score exceeds a random `negative`
/// score, ties counting one half. Rank-based, O(n log n).
double auroc(std::span<const double> negatives, std::span<const double> positives);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

Moments moments(std::span<const double> values);
Moments moments(std::span<const float> values);

/// splitmix64 step; used to derive independent sub-seeds from one seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace nutnet::stats
