#include "adrop/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "adrop/errors.hpp"

namespace adrop {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'R', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(params.groups.size()));
  for (const auto& g : params.groups) {
    put_u32(os, static_cast<std::uint32_t>(g.name.size()));
    os.write(g.name.data(), static_cast<std::streamsize>(g.name.size()));
    put_u32(os, 2);  // rank
    put_u64(os, g.rows);
    put_u64(os, g.cols);
    for (double v : g.values) put_f64(os, v);
  }
  if (!os) throw ParseError("checkpoint: write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("checkpoint: bad magic bytes");
  const std::uint32_t version = get_u32(is);
  if (version != kFormatVersion)
    throw ParseError("checkpoint: unsupported format version");
  const std::uint32_t count = get_u32(is);
  ModelParams params;
  params.groups.reserve(count);
  for (std::uint32_t gi = 0; gi < count; ++gi) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ParseError("checkpoint: truncated group name");
    const std::uint32_t rank = get_u32(is);
    if (rank != 2) throw ParseError("checkpoint: only rank-2 groups supported");
    const std::uint64_t rows = get_u64(is);
    const std::uint64_t cols = get_u64(is);
    ParamGroup g = make_group(std::move(name), rows, cols, UnitAxis::None, gi);
    for (auto& v : g.values) v = get_f64(is);
    params.groups.push_back(std::move(g));
  }
  return params;
}

}  // namespace adrop
