#pragma once

#include <filesystem>
#include <iosfwd>

#include "xaidet/params.hpp"

namespace xaidet {

// "XADF" tensor container: magic, u16 version, then one record per tensor:
// u32 name length, UTF-8 name, u8 dtype (0 = f32), u32 rank, u32 dims,
// little-endian f32 payload. Round-trips bit-exactly.

void write_xadf(std::ostream& os, const ParamSet& params);
ParamSet read_xadf(std::istream& is);

void write_xadf_file(const std::filesystem::path& path, const ParamSet& params);
ParamSet read_xadf_file(const std::filesystem::path& path);

}  // namespace xaidet
