#include "xaidet/serialize.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace xaidet {
namespace {

constexpr char kMagic[4] = {'X', 'A', 'D', 'F'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f32_payload(std::ostream& os, const float* p, std::size_t n) {
  // Little-endian on every supported target; byte-swap would go here otherwise.
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

}  // namespace

void write_xadf(std::ostream& os, const ParamSet& params) {
  os.write(kMagic, 4);
  put_u16(os, kVersion);
  for (const auto& [name, t] : params.entries) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(0);  // dtype f32
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    put_f32_payload(os, t.data(), static_cast<std::size_t>(t.size()));
  }
  if (!os) throw std::runtime_error("XADF write failed");
}

ParamSet read_xadf(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not an XADF container (bad magic)");
  std::uint16_t version = get_u16(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported XADF version " + std::to_string(version));

  ParamSet out;
  for (;;) {
    std::uint32_t name_len = 0;
    {
      unsigned char b[4];
      is.read(reinterpret_cast<char*>(b), 4);
      if (is.gcount() == 0 && is.eof()) break;  // clean end of container
      if (is.gcount() != 4) throw std::runtime_error("truncated XADF record header");
      for (int i = 0; i < 4; ++i) name_len |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    }
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    int dtype = is.get();
    if (dtype != 0) throw std::runtime_error("unsupported XADF dtype " + std::to_string(dtype));
    std::uint32_t rank = get_u32(is);
    if (rank > 8) throw std::runtime_error("implausible XADF rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size()) * 4);
    if (!is) throw std::runtime_error("truncated XADF payload for '" + name + "'");
    out.add(name, std::move(t));
  }
  return out;
}

void write_xadf_file(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_xadf(f, params);
}

ParamSet read_xadf_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return read_xadf(f);
}

}  // namespace xaidet
