#pragma once

#include "sdfa/tensor.hpp"

#include <filesystem>
#include <stdexcept>

namespace sdfa {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes an 8-bit PNG (gray, gray+alpha, RGB or RGBA) into a 1x3xHxW
/// tensor scaled to [0, 1].
Tensor<float> read_png_rgb(const std::filesystem::path& path);

/// Decodes a single-channel PNG (8- or 16-bit) into 1x1xHxW raw integer
/// values (not rescaled).
Tensor<float> read_png_gray_raw(const std::filesystem::path& path);

/// Encodes a 1x3xHxW tensor with values in [0, 1] as 8-bit RGB.
void write_png_rgb(const std::filesystem::path& path, const Tensor<float>& image);

/// Encodes 1x1xHxW raw values as 16-bit gray (rounded, clamped to [0, 65535]).
void write_png_gray16(const std::filesystem::path& path, const Tensor<float>& values);

/// Encodes 1x1xHxW raw values as 8-bit gray (rounded, clamped to [0, 255]).
void write_png_gray8(const std::filesystem::path& path, const Tensor<float>& values);

}  // namespace sdfa
