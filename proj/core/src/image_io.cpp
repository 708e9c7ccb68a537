#include "nutnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nutnet/error.hpp"

namespace nutnet::io {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const unsigned char* data, std::size_t n) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write '" + path + "'");
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw InputError("failed writing '" + path + "'");
}

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

bool has_extension(const std::string& path, const char* ext) {
  std::string e = std::filesystem::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

// Reads a whitespace/comment separated header integer from a PNM stream.
int pnm_int(const std::vector<unsigned char>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw InputError("malformed PPM header");
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > (1 << 20)) throw InputError("PPM dimension too large");
    ++pos;
  }
  return static_cast<int>(v);
}

Image decode_ppm(const std::vector<unsigned char>& b) {
  std::size_t pos = 2;
  const int w = pnm_int(b, pos);
  const int h = pnm_int(b, pos);
  const int maxval = pnm_int(b, pos);
  if (maxval != 255) throw InputError("only 8-bit PPM (maxval 255) is supported");
  ++pos;  // single whitespace before the raster
  if (w < 1 || h < 1) throw InputError("PPM has empty dimensions");
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (b.size() < pos + need) throw InputError("PPM raster truncated");
  Image img(h, w);
  for (std::size_t i = 0; i < need; ++i) img.data[i] = static_cast<float>(b[pos + i]) / 255.0f;
  return img;
}

std::vector<unsigned char> encode_ppm(const Image& image) {
  std::ostringstream hdr;
  hdr << "P6\n" << image.width << " " << image.height << "\n255\n";
  const std::string h = hdr.str();
  std::vector<unsigned char> out(h.begin(), h.end());
  out.reserve(out.size() + image.data.size());
  for (float v : image.data) out.push_back(to_byte(v));
  return out;
}

std::vector<unsigned char> encode_png_raw(const unsigned char* pixels, int width, int height, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw InputError(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw InputError(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::vector<unsigned char> decode_png_raw(const std::vector<unsigned char>& bytes, png_uint_32 format, int& width,
                                          int& height) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw InputError(std::string("PNG decode failed: ") + img.message);
  }
  img.format = format;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw InputError(std::string("PNG decode failed: ") + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return pixels;
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& image) {
  std::vector<unsigned char> px(image.data.size());
  std::transform(image.data.begin(), image.data.end(), px.begin(), to_byte);
  return encode_png_raw(px.data(), image.width, image.height, PNG_FORMAT_RGB);
}

Image decode_png(const std::vector<unsigned char>& bytes) {
  int w = 0;
  int h = 0;
  const auto px = decode_png_raw(bytes, PNG_FORMAT_RGB, w, h);
  Image img(h, w);
  for (std::size_t i = 0; i < px.size(); ++i) img.data[i] = static_cast<float>(px[i]) / 255.0f;
  return img;
}

Image read_image(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw InputError("'" + path + "' is neither PNG nor binary PPM");
}

void write_image(const Image& image, const std::string& path) {
  const auto bytes = has_extension(path, ".ppm") ? encode_ppm(image) : encode_png(image);
  write_file(path, bytes.data(), bytes.size());
}

void write_mask(const Mask& mask, const std::string& path) {
  std::vector<unsigned char> px(mask.data.size());
  std::transform(mask.data.begin(), mask.data.end(), px.begin(),
                 [](std::uint8_t v) { return static_cast<unsigned char>(v ? 255 : 0); });
  const auto bytes = encode_png_raw(px.data(), mask.width, mask.height, PNG_FORMAT_GRAY);
  write_file(path, bytes.data(), bytes.size());
}

Mask read_mask(const std::string& path) {
  const auto bytes = read_file(path);
  int w = 0;
  int h = 0;
  const auto px = decode_png_raw(bytes, PNG_FORMAT_GRAY, w, h);
  Mask m(h, w);
  for (std::size_t i = 0; i < px.size(); ++i) m.data[i] = px[i] ? 1 : 0;
  return m;
}

std::vector<std::string> list_images(const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) throw InputError("'" + directory + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const std::string p = entry.path().string();
    if (has_extension(p, ".png") || has_extension(p, ".ppm")) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace nutnet::io
