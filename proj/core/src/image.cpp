#include "nutnet/image.hpp"

#include <numeric>

namespace nutnet {

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += v ? 1 : 0;
  return n;
}

double Mask::fraction() const {
  return data.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(data.size());
}

}  // namespace nutnet
