#pragma once

// Binary container for one Gated-MLP block.
//
//   offset  size  field
//   0       8     magic "CATSW1\0\0"
//   8       4     version (u32 LE) = 1
//   12      4     d (u32 LE)
//   16      4     m (u32 LE)
//   20      3     layout flag per matrix (u8; 0 row-major, 1 column-major),
//                 in order W_gate, W_up, W_down
//   23      ...   FP32 LE payloads W_gate [d x m], W_up [d x m], W_down [m x d],
//                 each in the storage order its flag names

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cats/errors.hpp"
#include "cats/kernel.hpp"
#include "cats/linalg.hpp"

namespace cats {

inline constexpr std::array<char, 8> kWeightMagic = {'C', 'A', 'T', 'S', 'W', '1', '\0', '\0'};
inline constexpr std::uint32_t kWeightVersion = 1;
inline constexpr std::size_t kWeightHeaderSize = 23;

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; add byte swapping for this target");

namespace detail {

inline std::uint8_t* put_u32(std::uint8_t* out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) *out++ = static_cast<std::uint8_t>(v >> (8 * b));
  return out;
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

inline std::uint8_t* put_matrix(std::uint8_t* out, const Matrix& m) {
  const std::size_t n = m.size() * sizeof(float);
  std::memcpy(out, m.data().data(), n);
  return out + n;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_weights(const GatedMlpWeights& w) {
  validate(w);
  if (w.d > UINT32_MAX || w.m > UINT32_MAX) throw ShapeError("weight file dimensions exceed u32");
  std::vector<std::uint8_t> out(kWeightHeaderSize + 3 * w.d * w.m * sizeof(float));
  std::uint8_t* p = std::copy(kWeightMagic.begin(), kWeightMagic.end(), out.data());
  p = detail::put_u32(p, kWeightVersion);
  p = detail::put_u32(p, static_cast<std::uint32_t>(w.d));
  p = detail::put_u32(p, static_cast<std::uint32_t>(w.m));
  for (const Matrix* m : {&w.gate, &w.up, &w.down}) *p++ = static_cast<std::uint8_t>(m->layout());
  for (const Matrix* m : {&w.gate, &w.up, &w.down}) p = detail::put_matrix(p, *m);
  return out;
}

// Matrices stored in a layout other than the block's are re-stored.
inline GatedMlpWeights decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kWeightMagic.size() ||
      std::memcmp(bytes.data(), kWeightMagic.data(), kWeightMagic.size()) != 0)
    throw FormatError("bad magic, not a CATS weight file", 0);
  if (bytes.size() < kWeightHeaderSize)
    throw FormatError("truncated header", bytes.size());
  const std::uint32_t version = detail::get_u32(bytes.data() + 8);
  if (version != kWeightVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version), 8);
  const std::size_t d = detail::get_u32(bytes.data() + 12);
  const std::size_t m = detail::get_u32(bytes.data() + 16);
  if (d == 0 || m == 0) throw FormatError("zero dimension in header", d == 0 ? 12 : 16);
  std::array<Layout, 3> layouts{};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::uint8_t flag = bytes[20 + i];
    if (flag > 1) throw FormatError("invalid layout flag " + std::to_string(flag), 20 + i);
    layouts[i] = static_cast<Layout>(flag);
  }
  const std::size_t payload = 3 * d * m * sizeof(float);
  if (bytes.size() != kWeightHeaderSize + payload) {
    const std::size_t at = std::min(bytes.size(), kWeightHeaderSize + payload);
    throw FormatError("payload is " + std::to_string(bytes.size() - kWeightHeaderSize) +
                          " bytes, expected " + std::to_string(payload),
                      at);
  }
  const std::uint8_t* p = bytes.data() + kWeightHeaderSize;
  auto read = [&](std::size_t rows, std::size_t cols, Layout layout) {
    std::vector<float> data(rows * cols);
    std::memcpy(data.data(), p, data.size() * sizeof(float));
    p += data.size() * sizeof(float);
    return Matrix(rows, cols, layout, std::move(data));
  };
  Matrix gate = read(d, m, layouts[0]);
  Matrix up = read(d, m, layouts[1]);
  Matrix down = read(m, d, layouts[2]);
  return make_weights(gate, up, down);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on '" + path + "'");
}

inline void save_weights(const std::string& path, const GatedMlpWeights& w) {
  write_file_bytes(path, encode_weights(w));
}

inline GatedMlpWeights load_weights(const std::string& path) {
  return decode_weights(read_file_bytes(path));
}

}  // namespace cats
