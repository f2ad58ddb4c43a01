#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "medformer/tensor.hpp"

namespace mf {

// MFT1 tensor container: magic "MFT1", u8 dtype code (0=f32, 1=f64, 2=u8),
// u8 rank, u64 extents[rank], then the little-endian row-major payload.
// Errors carry the byte offset at which parsing stopped.

namespace mft {

template <class T>
constexpr std::uint8_t dtype_code();
template <>
constexpr std::uint8_t dtype_code<float>() {
  return 0;
}
template <>
constexpr std::uint8_t dtype_code<double>() {
  return 1;
}
template <>
constexpr std::uint8_t dtype_code<std::uint8_t>() {
  return 2;
}

inline std::size_t dtype_size(std::uint8_t code) {
  switch (code) {
    case 0: return 4;
    case 1: return 8;
    case 2: return 1;
    default: throw ValueError("mft: unknown dtype code " + std::to_string(code));
  }
}

inline void write_u64(std::ofstream& f, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(b, 8);
}

inline std::uint64_t read_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

struct Header {
  std::uint8_t dtype = 0;
  Shape shape;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
  }
};

inline Header read_header(std::ifstream& f, const std::string& path) {
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "MFT1")
    throw ValueError("mft: bad magic in '" + path + "' at byte offset 0");
  Header h;
  const int dtype = f.get();
  const int rank = f.get();
  if (!f) throw ValueError("mft: truncated header in '" + path + "' at byte offset 4");
  h.dtype = static_cast<std::uint8_t>(dtype);
  dtype_size(h.dtype);
  h.shape.resize(static_cast<std::size_t>(rank));
  for (std::size_t i = 0; i < h.shape.size(); ++i) {
    h.shape[i] = read_u64(f);
    if (!f)
      throw ValueError("mft: truncated extents in '" + path + "' at byte offset " +
                       std::to_string(6 + 8 * i));
  }
  return h;
}

}  // namespace mft

template <class T>
void write_mft(const std::string& path, const T* data, const Shape& shape) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValueError("mft: cannot open '" + path + "' for writing");
  f.write("MFT1", 4);
  f.put(static_cast<char>(mft::dtype_code<T>()));
  f.put(static_cast<char>(shape.size()));
  std::size_t n = 1;
  for (auto e : shape) {
    mft::write_u64(f, e);
    n *= e;
  }
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!f) throw ValueError("mft: write failed for '" + path + "'");
}

template <class T>
void write_mft(const std::string& path, const Tensor<T>& t) {
  write_mft(path, t.data(), t.shape());
}

inline void write_mft(const std::string& path, const std::vector<std::uint8_t>& v,
                      const Shape& shape) {
  write_mft(path, v.data(), shape);
}

template <class T>
std::pair<Shape, std::vector<T>> read_mft_array(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValueError("mft: cannot open '" + path + "'");
  auto h = mft::read_header(f, path);
  if (h.dtype != mft::dtype_code<T>())
    throw ValueError("mft: dtype code " + std::to_string(h.dtype) + " in '" + path +
                     "' does not match the requested element type");
  const std::size_t header_bytes = 6 + 8 * h.shape.size();
  std::vector<T> data(h.count());
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(data.size() * sizeof(T)));
  const std::size_t got = static_cast<std::size_t>(f.gcount());
  if (got != data.size() * sizeof(T))
    throw ValueError("mft: truncated payload in '" + path + "': expected " +
                     std::to_string(data.size() * sizeof(T)) + " bytes at byte offset " +
                     std::to_string(header_bytes) + ", got " + std::to_string(got));
  return {h.shape, std::move(data)};
}

template <class T>
Tensor<T> read_mft(const std::string& path) {
  auto [shape, data] = read_mft_array<T>(path);
  return Tensor<T>(shape, std::move(data));
}

}  // namespace mf
