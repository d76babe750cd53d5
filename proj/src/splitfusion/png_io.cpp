#include "splitfusion/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace splitfusion {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

}  // namespace

Image<uint16_t> read_png16(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open PNG", path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail("libpng init failed", path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("PNG read error", path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("expected grayscale PNG", path);
  }
  if (bit_depth < 16) png_set_expand_gray_1_2_4_to_8(png);
  if (bit_depth == 16) png_set_swap(png);  // file is big-endian

  png_read_update_info(png, info);
  Image<uint16_t> img(static_cast<int>(png_get_image_width(png, info)),
                      static_cast<int>(png_get_image_height(png, info)));

  std::vector<png_bytep> rows(img.height);
  std::vector<uint8_t> row8;
  if (bit_depth == 16) {
    for (int r = 0; r < img.height; ++r)
      rows[r] = reinterpret_cast<png_bytep>(img.data.data() + static_cast<size_t>(r) * img.width);
    png_read_image(png, rows.data());
  } else {
    row8.resize(static_cast<size_t>(img.width) * img.height);
    for (int r = 0; r < img.height; ++r)
      rows[r] = row8.data() + static_cast<size_t>(r) * img.width;
    png_read_image(png, rows.data());
    for (size_t i = 0; i < row8.size(); ++i) img.data[i] = row8[i];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png16(const std::string& path, const Image<uint16_t>& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot create PNG", path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail("libpng init failed", path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG write error", path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);

  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r) {
    rows[r] = reinterpret_cast<png_bytep>(
        const_cast<uint16_t*>(img.data.data() + static_cast<size_t>(r) * img.width));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image<std::array<uint8_t, 3>> read_png_rgb(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open PNG", path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail("libpng init failed", path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("PNG read error", path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_strip_alpha(png);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  Image<std::array<uint8_t, 3>> img(static_cast<int>(png_get_image_width(png, info)),
                                    static_cast<int>(png_get_image_height(png, info)));
  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r)
    rows[r] = reinterpret_cast<png_bytep>(img.data.data() + static_cast<size_t>(r) * img.width);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_rgb(const std::string& path, const Image<std::array<uint8_t, 3>>& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot create PNG", path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) fail("libpng init failed", path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("PNG write error", path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r) {
    rows[r] = reinterpret_cast<png_bytep>(
        const_cast<std::array<uint8_t, 3>*>(img.data.data() + static_cast<size_t>(r) * img.width));
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace splitfusion
