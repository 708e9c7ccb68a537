#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace nutnet {

/// H x W x 3 image. Row-major, channel-interleaved: the value of channel c at
/// (y, x) lives at data[(y * width + x) * 3 + c]. Photographs are normalized
/// to [0, 1]; reconstructions share the layout but are unbounded.
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, fill) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
  }
  float& at(int y, int x, int c) { return data[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data[index(y, x, c)]; }

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  bool empty() const { return data.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

/// H x W binary mask, one byte per pixel holding 0 or 1.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t count() const;
  double fraction() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

}  // namespace nutnet
