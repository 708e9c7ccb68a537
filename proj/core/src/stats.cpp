#include "nutnet/stats.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "nutnet/error.hpp"

namespace nutnet::stats {

double auroc(std::span<const double> negatives, std::span<const double> positives) {
  if (negatives.empty() || positives.empty()) throw MetricError("auroc needs both classes");
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(negatives.size() + positives.size());
  for (double v : negatives) all.push_back({v, false});
  for (double v : positives) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum += mid;
    }
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

template <typename T>
Moments moments_impl(std::span<const T> values) {
  Moments m;
  if (values.empty()) return m;
  double s = 0.0;
  for (T v : values) s += static_cast<double>(v);
  m.mean = s / static_cast<double>(values.size());
  double q = 0.0;
  for (T v : values) {
    const double d = static_cast<double>(v) - m.mean;
    q += d * d;
  }
  m.variance = q / static_cast<double>(values.size());
  return m;
}

}  // namespace

Moments moments(std::span<const double> values) { return moments_impl(values); }
Moments moments(std::span<const float> values) { return moments_impl(values); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace nutnet::stats
