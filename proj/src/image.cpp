#include "mdfr/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace mdfr {

FaceImage constant_image(int h, int w, double value) {
  FaceImage img(h, w);
  std::fill(img.pixels.begin(), img.pixels.end(), value);
  return img;
}

void clip01(FaceImage& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
}

bool all_finite(const FaceImage& img) {
  for (double v : img.pixels)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

FaceImage load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng error while reading: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<png_byte> row(png_get_rowbytes(png, info));
  FaceImage img(static_cast<int>(h), static_cast<int>(w));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(static_cast<int>(y), static_cast<int>(x), c) = row[x * 3 + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const FaceImage& img, const std::string& path) {
  if (img.height <= 0 || img.width <= 0) throw InvalidArgumentError("save_png: empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng error while writing: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
        row[x * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {
constexpr int kDivider = 2;
constexpr double kDividerValue = 1.0;
} // namespace

FaceImage hconcat_images(const std::vector<FaceImage>& tiles) {
  if (tiles.empty()) return FaceImage();
  const int h = tiles.front().height;
  int w_total = -kDivider;
  for (const auto& t : tiles) {
    if (t.height != h) throw ShapeError("hconcat_images: mismatched heights");
    w_total += t.width + kDivider;
  }
  FaceImage out = constant_image(h, w_total, kDividerValue);
  int x0 = 0;
  for (const auto& t : tiles) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < t.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = t.at(y, x, c);
    x0 += t.width + kDivider;
  }
  return out;
}

FaceImage vconcat_images(const std::vector<FaceImage>& rows) {
  if (rows.empty()) return FaceImage();
  const int w = rows.front().width;
  int h_total = -kDivider;
  for (const auto& r : rows) {
    if (r.width != w) throw ShapeError("vconcat_images: mismatched widths");
    h_total += r.height + kDivider;
  }
  FaceImage out = constant_image(h_total, w, kDividerValue);
  int y0 = 0;
  for (const auto& r : rows) {
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) out.at(y0 + y, x, c) = r.at(y, x, c);
    y0 += r.height + kDivider;
  }
  return out;
}

} // namespace mdfr
