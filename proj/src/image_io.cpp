#include "xaidet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace xaidet {

namespace {

void require_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw std::invalid_argument(std::string(what) + " expects a (3,H,W) tensor, got " +
                                Tensor::shape_str(t.shape()));
}

int to_byte(float v) {
  int q = static_cast<int>(std::lround(255.0f * v));
  return std::clamp(q, 0, 255);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

std::vector<std::uint8_t> quantize_rgb8(const Tensor& chw) {
  require_chw(chw, "quantize_rgb8");
  const int h = chw.dim(1), w = chw.dim(2);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(to_byte(chw.at({c, y, x})));
  return out;
}

Tensor quantize8(const Tensor& chw) {
  require_chw(chw, "quantize8");
  Tensor out(chw.shape());
  for (Eigen::Index i = 0; i < chw.size(); ++i)
    out[i] = static_cast<float>(to_byte(chw[i])) / 255.0f;
  return out;
}

Tensor quantize_attacked(const Tensor& x_adv, const Tensor& x, int max_steps) {
  require_chw(x_adv, "quantize_attacked");
  require_shape(x, x_adv.shape(), "quantize_attacked source");
  Tensor out(x.shape());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    int src = to_byte(x[i]);
    int adv = to_byte(x_adv[i]);
    adv = std::clamp(adv, src - max_steps, src + max_steps);
    out[i] = static_cast<float>(std::clamp(adv, 0, 255)) / 255.0f;
  }
  return out;
}

void write_png_rgb8(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb,
                    int height, int width) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3)
    throw std::invalid_argument("write_png_rgb8: buffer size mismatch");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng error while writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png(const std::filesystem::path& path, const Tensor& chw) {
  write_png_rgb8(path, quantize_rgb8(chw), chw.dim(1), chw.dim(2));
}

void write_map_png(const std::filesystem::path& path, const Tensor& map_chw) {
  require_chw(map_chw, "write_map_png");
  float m = max_abs(map_chw);
  Tensor scaled(map_chw.shape());
  scaled.array() = m > 0.0f ? (map_chw.array().abs() / m) : map_chw.array().abs();
  write_png(path, scaled);
}

Tensor read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng error while reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = rgb.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({3, static_cast<int>(h), static_cast<int>(w)});
  for (int y = 0; y < static_cast<int>(h); ++y)
    for (int x = 0; x < static_cast<int>(w); ++x)
      for (int c = 0; c < 3; ++c)
        out.at({c, y, x}) =
            static_cast<float>(rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return out;
}

}  // namespace xaidet
