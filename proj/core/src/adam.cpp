#include "nutnet/adam.hpp"

#include <cmath>

#include "nutnet/error.hpp"

namespace nutnet::kernel {

template <typename T>
void adam_step(std::span<ParamSlot<T>> slots, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.first_moment.empty()) {
    for (const auto& s : slots) {
      state.first_moment.emplace_back(s.values.size(), T(0));
      state.second_moment.emplace_back(s.values.size(), T(0));
    }
  }
  if (state.first_moment.size() != slots.size()) {
    throw TrainingError("adam_step: optimizer state has " + std::to_string(state.first_moment.size()) +
                        " slots, got " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    if (s.grads.size() != s.values.size() || state.first_moment[i].size() != s.values.size()) {
      throw TrainingError("adam_step: shape mismatch in slot '" + s.name + "'");
    }
    for (T g : s.grads) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw TrainingError("adam_step: non-finite gradient in layer '" + s.name + "'");
      }
    }
  }

  ++state.step;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& s = slots[i];
    for (std::size_t j = 0; j < s.values.size(); ++j) {
      const double g = static_cast<double>(s.grads[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = cfg.learning_rate * (mj / c1) / (std::sqrt(vj / c2) + cfg.epsilon);
      s.values[j] = static_cast<T>(static_cast<double>(s.values[j]) - update);
    }
  }
}

template void adam_step(std::span<ParamSlot<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step(std::span<ParamSlot<double>>, AdamState<double>&, const AdamConfig&);

}  // namespace nutnet::kernel
