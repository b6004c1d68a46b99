#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "d2f/tensor.hpp"

// D2FT binary tensor files:
//   "D2FT" | u32 version (=1) | u32 rank | rank x u32 extents | f32 values
// All integers and floats little-endian, values row-major.
namespace d2f {

inline constexpr char kTensorMagic[4] = {'D', '2', 'F', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;

namespace detail {

inline void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Writes to a sibling temporary file and renames it into place, so a failed
// write never leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t n) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + tmp.string());
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline std::vector<unsigned char> encode_tensor(const Tensor& t) {
  std::vector<unsigned char> buf(kTensorMagic, kTensorMagic + 4);
  detail::put_u32(buf, kTensorVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) detail::put_u32(buf, static_cast<std::uint32_t>(e));
  for (float v : t.values()) detail::put_u32(buf, std::bit_cast<std::uint32_t>(v));
  return buf;
}

inline Tensor decode_tensor(const std::vector<unsigned char>& buf) {
  if (buf.size() < 12 || std::memcmp(buf.data(), kTensorMagic, 4) != 0)
    throw FormatError("not a D2FT tensor file (bad magic)");
  if (detail::get_u32(buf.data() + 4) != kTensorVersion)
    throw FormatError("unsupported D2FT version " + std::to_string(detail::get_u32(buf.data() + 4)));
  const std::uint32_t rank = detail::get_u32(buf.data() + 8);
  const std::size_t header = 12 + 4 * static_cast<std::size_t>(rank);
  if (buf.size() < header) throw FormatError("truncated D2FT header");
  Shape shape(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = detail::get_u32(buf.data() + 12 + 4 * i);
    if (shape[i] != 0 && count > buf.size() / shape[i])
      throw FormatError("D2FT payload shorter than shape " + shape_string(shape));
    count *= shape[i];
  }
  validate_shape(shape);
  if (buf.size() - header != 4 * count)
    throw FormatError("D2FT payload length " + std::to_string(buf.size() - header) +
                      " does not match shape " + shape_string(shape));
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i)
    values[i] = std::bit_cast<float>(detail::get_u32(buf.data() + header + 4 * i));
  return Tensor(std::move(shape), std::move(values));
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  auto buf = encode_tensor(t);
  detail::write_file_atomic(path, buf.data(), buf.size());
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  return decode_tensor(detail::read_file(path));
}

}  // namespace d2f
