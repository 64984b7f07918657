#include "blurvid/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <memory>

namespace blurvid {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void png_quiet(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; these helpers keep only trivially
// destructible locals between setjmp and the libpng calls.
bool encode_rgb(std::FILE* f, const png_byte* rgb, int H, int W) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet, png_quiet);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < H; ++y) png_write_row(png, rgb + static_cast<std::size_t>(y) * W * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct Decoded {
  png_bytep data = nullptr;  // malloc'd RGB
  png_bytepp rows = nullptr;
  int height = 0;
  int width = 0;
};

bool decode_rgb(std::FILE* f, Decoded* out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_quiet, png_quiet);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    std::free(out->rows);
    out->rows = nullptr;
    std::free(out->data);
    out->data = nullptr;
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int W = static_cast<int>(png_get_image_width(png, info));
  const int H = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(W) * 3) png_error(png, "unsupported layout");
  out->data = static_cast<png_bytep>(std::malloc(static_cast<std::size_t>(H) * W * 3));
  out->rows = static_cast<png_bytepp>(std::malloc(sizeof(png_bytep) * static_cast<std::size_t>(H)));
  if (!out->data || !out->rows) png_error(png, "out of memory");
  for (int y = 0; y < H; ++y) out->rows[y] = out->data + static_cast<std::size_t>(y) * W * 3;
  png_read_image(png, out->rows);
  png_read_end(png, nullptr);
  std::free(out->rows);
  out->rows = nullptr;
  out->height = H;
  out->width = W;
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Tensor& image) {
  int C, H, W;
  if (image.rank() == 4 && image.dim(0) == 1) {
    C = image.dim(1), H = image.dim(2), W = image.dim(3);
  } else if (image.rank() == 3) {
    C = image.dim(0), H = image.dim(1), W = image.dim(2);
  } else {
    throw ShapeError("write_png: expected (1,3,H,W) or (3,H,W), got " + to_string(image.shape()));
  }
  if (C != 3) throw ShapeError("write_png: expected 3 channels, got " + to_string(image.shape()));

  std::vector<png_byte> rgb(static_cast<std::size_t>(H) * W * 3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image[static_cast<std::int64_t>(c * plane + p)], 0.0f, 1.0f);
      rgb[p * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
  File f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  if (!encode_rgb(f.get(), rgb.data(), H, W)) throw Error("failed to encode '" + path.string() + "'");
}

Tensor read_png(const std::filesystem::path& path) {
  File f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw Error("cannot open '" + path.string() + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8)) {
    throw Error("'" + path.string() + "' is not a PNG file");
  }
  Decoded d;
  if (!decode_rgb(f.get(), &d)) throw Error("corrupt image '" + path.string() + "'");
  std::unique_ptr<png_byte, decltype(&std::free)> hold(d.data, &std::free);
  const std::size_t plane = static_cast<std::size_t>(d.height) * d.width;
  std::vector<float> out(plane * 3);
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) out[c * plane + p] = d.data[p * 3 + c] / 255.0f;
  return Tensor({1, 3, d.height, d.width}, std::move(out));
}

}  // namespace blurvid
