#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "d2f/ops.hpp"
#include "d2f/tensor_io.hpp"

using namespace d2f;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "d2f_tensor_io_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

}  // namespace

TEST(TensorFile, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto t = Tensor::uniform({8, 16, 16}, seed, -100, 100);
    const auto p = temp_path("rt.d2ft");
    save_tensor(p, t);
    EXPECT_TRUE(ops::bitwise_equal(load_tensor(p), t));
  }
}

TEST(TensorFile, LayoutIsLittleEndian) {
  Tensor t(Shape{2}, std::vector<float>{1.0f, -2.0f});
  auto b = encode_tensor(t);
  const std::vector<unsigned char> expected = {'D', '2', 'F', 'T', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0,
                                               0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0};
  EXPECT_EQ(b, expected);
}

TEST(TensorFile, RejectsMalformedFiles) {
  auto good = encode_tensor(Tensor::uniform({3, 4}, 1, -1, 1));
  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_tensor(magic), FormatError);
  auto version = good;
  version[4] = 2;
  EXPECT_THROW(decode_tensor(version), FormatError);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode_tensor(truncated), FormatError);
  auto longer = good;
  longer.push_back(0);
  EXPECT_THROW(decode_tensor(longer), FormatError);
  const std::vector<unsigned char> rank0 = {'D', '2', 'F', 'T', 1, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_THROW(decode_tensor(rank0), ShapeError);
  const std::vector<unsigned char> huge = {'D', '2', 'F', 'T', 1, 0, 0, 0, 2, 0, 0, 0,
                                           0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF};
  EXPECT_THROW(decode_tensor(huge), FormatError);

  const auto p = temp_path("trunc.d2ft");
  write_bytes(p, truncated);
  EXPECT_THROW(load_tensor(p), FormatError);
  EXPECT_THROW(load_tensor(temp_path("missing.d2ft")), IoError);
}
