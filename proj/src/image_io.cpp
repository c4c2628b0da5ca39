#include "sdfa/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace sdfa {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageIoError("cannot open '" + path.string() + "'");
  return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct Decoded {
  png_uint_32 width = 0, height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;  // row-major, interleaved channels
};

Decoded decode(const std::filesystem::path& path, bool keep_16bit) {
  FilePtr file = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ImageIoError("'" + path.string() + "' is not a PNG file");

  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw ImageIoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("libpng initialization failed");
  }

  Decoded out;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("failed to decode '" + path.string() + "': " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16 && !keep_16bit) png_set_strip_16(png);
  if (depth == 16 && keep_16bit) png_set_swap(png);  // host order on little-endian
  png_read_update_info(png, info);

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(count);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      out.samples[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

void encode(const std::filesystem::path& path, png_uint_32 width, png_uint_32 height, int color_type, int depth,
            const std::vector<unsigned char>& buffer) {
  FilePtr file = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
  if (!png) throw ImageIoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("libpng initialization failed");
  }
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (depth / 8);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(buffer.data() + y * rowbytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed to encode '" + path.string() + "': " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::pair<png_uint_32, png_uint_32> single_image_dims(const Tensor<float>& t, Index channels, const char* op) {
  require(t.n() == 1 && t.c() == channels, std::string(op) + ": expected 1x" + std::to_string(channels) +
                                               "xHxW, got " + t.shape().str());
  require(t.h() > 0 && t.w() > 0, std::string(op) + ": empty image");
  return {static_cast<png_uint_32>(t.w()), static_cast<png_uint_32>(t.h())};
}

}  // namespace

Tensor<float> read_png_rgb(const std::filesystem::path& path) {
  const Decoded d = decode(path, false);
  const Index h = d.height, w = d.width;
  Tensor<float> out(Shape{1, 3, h, w});
  const bool gray = d.channels < 3;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * w + x) * d.channels;
      for (Index c = 0; c < 3; ++c) out(0, c, y, x) = d.samples[base + (gray ? 0 : c)] / 255.0f;
    }
  return out;
}

Tensor<float> read_png_gray_raw(const std::filesystem::path& path) {
  const Decoded d = decode(path, true);
  if (d.channels != 1) throw ImageIoError("'" + path.string() + "' is not a single-channel PNG");
  Tensor<float> out(Shape{1, 1, static_cast<Index>(d.height), static_cast<Index>(d.width)});
  for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<float>(d.samples[static_cast<std::size_t>(i)]);
  return out;
}

void write_png_rgb(const std::filesystem::path& path, const Tensor<float>& image) {
  const auto [w, h] = single_image_dims(image, 3, "write_png_rgb");
  std::vector<unsigned char> buffer(static_cast<std::size_t>(w) * h * 3);
  for (Index y = 0; y < image.h(); ++y)
    for (Index x = 0; x < image.w(); ++x)
      for (Index c = 0; c < 3; ++c) {
        const float v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  encode(path, w, h, PNG_COLOR_TYPE_RGB, 8, buffer);
}

void write_png_gray16(const std::filesystem::path& path, const Tensor<float>& values) {
  const auto [w, h] = single_image_dims(values, 1, "write_png_gray16");
  std::vector<unsigned char> buffer(static_cast<std::size_t>(w) * h * 2);
  for (Index i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? std::clamp<double>(std::round(values[i]), 0.0, 65535.0) : 0.0;
    const auto u = static_cast<std::uint16_t>(v);
    std::memcpy(buffer.data() + 2 * i, &u, 2);
  }
  encode(path, w, h, PNG_COLOR_TYPE_GRAY, 16, buffer);
}

void write_png_gray8(const std::filesystem::path& path, const Tensor<float>& values) {
  const auto [w, h] = single_image_dims(values, 1, "write_png_gray8");
  std::vector<unsigned char> buffer(static_cast<std::size_t>(w) * h);
  for (Index i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? std::clamp<double>(std::round(values[i]), 0.0, 255.0) : 0.0;
    buffer[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v);
  }
  encode(path, w, h, PNG_COLOR_TYPE_GRAY, 8, buffer);
}

}  // namespace sdfa
