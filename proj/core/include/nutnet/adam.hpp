#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nutnet::kernel {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One trainable array together with its gradient. `name` shows up in
/// diagnostics when the gradient is not finite.
template <typename T>
struct ParamSlot {
  std::string name;
  std::span<T> values;
  std::span<const T> grads;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// Bias-corrected Adam update over all slots. The state is sized lazily on the
/// first call and must keep the same slot layout afterwards. All gradients are
/// checked before any parameter changes, so a TrainingError leaves both
/// parameters and state untouched.
template <typename T>
void adam_step(std::span<ParamSlot<T>> slots, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace nutnet::kernel
