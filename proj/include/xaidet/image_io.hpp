#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xaidet/tensor.hpp"

namespace xaidet {

/// round(255 v) per pixel, clamped to [0,255]; interleaved RGB rows.
std::vector<std::uint8_t> quantize_rgb8(const Tensor& chw);

/// Snap a CHW float image to the 8-bit grid it will occupy on disk.
Tensor quantize8(const Tensor& chw);

/// Quantize an attacked frame while clamping its integer pixel delta from
/// the (already quantized) source frame to +-max_steps grid steps, so the
/// stored twin stays inside the epsilon ball exactly.
Tensor quantize_attacked(const Tensor& x_adv, const Tensor& x, int max_steps);

void write_png_rgb8(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb,
                    int height, int width);
void write_png(const std::filesystem::path& path, const Tensor& chw);

/// |map| rescaled to [0,255] for human inspection.
void write_map_png(const std::filesystem::path& path, const Tensor& map_chw);

Tensor read_png(const std::filesystem::path& path);

}  // namespace xaidet
