#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "d2f/image.hpp"
#include "d2f/tensor_io.hpp"

// Binary PPM (P6, maxval 255) and 8-bit PNG. Bytes map to [0,1] as v/255
// and back as round(v*255).
namespace d2f {

namespace detail {

inline unsigned char quantize(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline Image decode_ppm(const std::vector<unsigned char>& buf) {
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(buf[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    if (pos >= buf.size() || !std::isdigit(buf[pos])) throw FormatError("malformed PPM header");
    std::size_t v = 0;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
      v = v * 10 + static_cast<std::size_t>(buf[pos++] - '0');
      if (v > (1u << 24)) throw FormatError("PPM header value out of range");
    }
    return v;
  };
  const std::size_t width = read_int();
  const std::size_t height = read_int();
  const std::size_t maxval = read_int();
  if (maxval != 255) throw FormatError("PPM bit depth must be 8 (maxval 255)");
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw FormatError("malformed PPM header");
  ++pos;
  if (width == 0 || height == 0) throw FormatError("PPM extents must be positive");
  const std::size_t n = width * height * 3;
  if (buf.size() - pos < n) throw FormatError("truncated PPM payload");
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = static_cast<float>(buf[pos + i]) / 255.0f;
  return Image(height, width, 3, std::move(px));
}

inline std::vector<unsigned char> encode_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> buf(header.begin(), header.end());
  for (std::size_t i = 0; i < img.height * img.width; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      buf.push_back(quantize(img.pixels[i * img.channels + (img.channels == 3 ? c : 0)]));
  return buf;
}

struct PngImageGuard {
  png_image* image;
  ~PngImageGuard() { png_image_free(image); }
};

inline Image decode_png(const std::vector<unsigned char>& buf) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&image};
  if (!png_image_begin_read_from_memory(&image, buf.data(), buf.size()))
    throw FormatError(std::string("invalid PNG: ") + image.message);
  if (image.format & PNG_FORMAT_FLAG_LINEAR) throw FormatError("PNG bit depth must be 8");
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr))
    throw FormatError(std::string("cannot decode PNG: ") + image.message);
  std::vector<float> px(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) px[i] = static_cast<float>(raw[i]) / 255.0f;
  return Image(image.height, image.width, color ? 3 : 1, std::move(px));
}

inline std::vector<unsigned char> encode_png(const Image& img) {
  std::vector<unsigned char> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize(img.pixels[i]);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  PngImageGuard guard{&image};
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, raw.data(), 0, nullptr))
    throw FormatError(std::string("cannot encode PNG: ") + image.message);
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raw.data(), 0, nullptr))
    throw FormatError(std::string("cannot encode PNG: ") + image.message);
  out.resize(size);
  return out;
}

}  // namespace detail

inline Image decode_image(const std::vector<unsigned char>& buf) {
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (buf.size() >= 8 && std::memcmp(buf.data(), png_sig, 8) == 0) return detail::decode_png(buf);
  if (buf.size() >= 2 && buf[0] == 'P' && buf[1] == '6') return detail::decode_ppm(buf);
  throw FormatError("unsupported image format (expected binary PPM P6 or PNG)");
}

inline Image read_image(const std::filesystem::path& path) {
  return decode_image(detail::read_file(path));
}

// Format chosen by extension: .png writes PNG, anything else binary PPM.
inline void write_image(const std::filesystem::path& path, const Image& img) {
  img.validate();
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto buf = ext == ".png" ? detail::encode_png(img) : detail::encode_ppm(img);
  detail::write_file_atomic(path, buf.data(), buf.size());
}

}  // namespace d2f
