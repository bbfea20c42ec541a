#ifndef BDKD_PNG_IO_HPP
#define BDKD_PNG_IO_HPP

#include <string>

#include "bdkd/tensor.hpp"

namespace bdkd {

/// Writes a [3,H,W] image with values in [0,1] as an 8-bit RGB PNG; each
/// sample is round(255*x). Deterministic byte-for-byte for a given image.
void write_png_rgb(const std::string& path, const Tensor& image);

/// Reads an 8-bit RGB non-interlaced PNG into a [3,H,W] tensor with values
/// v/255. Rejects other color types / bit depths with a contract error.
Tensor read_png_rgb(const std::string& path);

/// Lossless raw sidecar: "BDKF", u32 C,H,W, then little-endian f32 samples.
void write_f32_image(const std::string& path, const Tensor& image);
Tensor read_f32_image(const std::string& path);

} // namespace bdkd

#endif
