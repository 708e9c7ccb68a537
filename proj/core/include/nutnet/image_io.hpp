#pragma once

#include <string>
#include <vector>

#include "nutnet/image.hpp"

namespace nutnet::io {

/// Reads 8-bit PNG (any color type; alpha dropped, gray replicated) or binary
/// PPM (P6) and maps pixels to [0, 1] by /255. The format is chosen from the
/// file's magic bytes, not its extension. Throws InputError.
Image read_image(const std::string& path);

/// Writes an 8-bit RGB PNG or PPM chosen by extension (.ppm -> PPM, else PNG).
/// Values are clamped to [0, 1] and rounded to the nearest 1/255.
void write_image(const Image& image, const std::string& path);

/// Single-channel PNG, 0 -> 0 and 1 -> 255.
void write_mask(const Mask& mask, const std::string& path);
/// Any non-zero gray value reads as 1.
Mask read_mask(const std::string& path);

std::vector<unsigned char> encode_png(const Image& image);
Image decode_png(const std::vector<unsigned char>& bytes);

/// Regular files with .png/.ppm extensions, sorted by name.
std::vector<std::string> list_images(const std::string& directory);

}  // namespace nutnet::io
