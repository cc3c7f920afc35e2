#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "csil2o/errors.hpp"
#include "csil2o/tensor.hpp"

namespace csil2o {

// Parameter checkpoint, magic "CL2O":
//   magic[4] | version u32 | tensor count u32 |
//   per tensor: name length u32, UTF-8 name, rank u32, dims u64 each,
//   row-major f64 payload. All integers and floats little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t read_u32(std::istream& is, const char* ctx) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw format_error(std::string("truncated file while reading ") + ctx);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* ctx) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw format_error(std::string("truncated file while reading ") + ctx);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is, const char* ctx) {
  return std::bit_cast<double>(read_u64(is, ctx));
}

inline void expect_magic(std::istream& is, const char magic[4],
                         const char* what) {
  char got[4];
  if (!is.read(got, 4) || !std::equal(got, got + 4, magic))
    throw format_error(std::string("bad magic bytes, not a ") + what + " file");
}

}  // namespace detail

inline void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& named) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error("cannot open for writing: " + path);
  os.write("CL2O", 4);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) detail::write_u64(os, d);
    for (std::size_t i = 0; i < t.size(); ++i)
      detail::write_f64(os, t.data()[i]);
  }
  if (!os) throw format_error("write failed: " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("cannot open: " + path);
  detail::expect_magic(is, "CL2O", "CL2O checkpoint");
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion)
    throw format_error("unsupported checkpoint version " +
                       std::to_string(version));
  const std::uint32_t count = detail::read_u32(is, "tensor count");
  std::map<std::string, Tensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = detail::read_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw format_error("truncated file while reading tensor name");
    const std::uint32_t rank = detail::read_u32(is, "rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(detail::read_u64(is, "dims"));
      numel *= shape[d];
    }
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i)
      data[i] = detail::read_f64(is, "payload");
    out.emplace(name, Tensor::from_vector(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace csil2o
