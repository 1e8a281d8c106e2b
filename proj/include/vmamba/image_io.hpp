#pragma once

#include <filesystem>

#include "vmamba/tensor.hpp"

namespace vmamba {

struct Image {
  Tensor pixels;      // [3, H, W], unit scale
  int bit_depth = 8;  // 8 or 16
};

/// Reads PNG (8/16-bit; gray, palette and alpha are converted to RGB) or
/// binary PPM (P6, maxval up to 65535). Throws IngestionError naming the file.
Image read_image(const std::filesystem::path& path);

/// Writes by extension: ".ppm" gives P6, anything else PNG. Samples are
/// round(clamp(v, 0, 1) * maxval).
void write_image(const std::filesystem::path& path, const Tensor& pixels, int bit_depth);

void write_png(const std::filesystem::path& path, const Tensor& pixels, int bit_depth);
void write_ppm(const std::filesystem::path& path, const Tensor& pixels, int bit_depth);

bool is_image_file(const std::filesystem::path& path);

}  // namespace vmamba
