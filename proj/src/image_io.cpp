#include "vmamba/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "vmamba/errors.hpp"

namespace vmamba {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

void check_pixels(const Tensor& pixels, int bit_depth, const fs::path& path) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3 || pixels.dim(1) == 0 || pixels.dim(2) == 0) {
    throw DimensionError("cannot write " + path.string() + ": expected [3,H,W], got " +
                         shape_to_string(pixels.shape()));
  }
  if (bit_depth != 8 && bit_depth != 16) throw ConfigurationError("bit depth must be 8 or 16");
}

unsigned quantize(double v, unsigned maxval) {
  return static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IngestionError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_handler(png_structp png, png_const_charp) { std::longjmp(png_jmpbuf(png), 1); }
void png_warning_handler(png_structp, png_const_charp) {}

// libpng reports errors via longjmp, so nothing with a destructor may be
// created between setjmp and the last libpng call.
Image read_png(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IngestionError("libpng initialisation failed for " + path.string());
  }
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("cannot decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t h = height, w = width, plane = h * w;
  const bool wide = depth == 16;
  const double maxval = wide ? 65535.0 : 255.0;
  std::vector<double> values(3 * plane);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t idx = (x * 3 + c) * (wide ? 2 : 1);
        const unsigned char* row = buffer.data() + y * stride;
        const unsigned sample = wide ? (unsigned(row[idx]) << 8) | row[idx + 1] : row[idx];
        values[c * plane + y * w + x] = sample / maxval;
      }
  return {Tensor({3, h, w}, std::move(values)), wide ? 16 : 8};
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw IngestionError("not a binary PPM (P6): " + path.string());
  std::size_t w = 0, h = 0;
  unsigned long maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw IngestionError("malformed PPM header in " + path.string());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw IngestionError("unsupported PPM header in " + path.string());
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(w * h * 3 * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IngestionError("truncated PPM data in " + path.string());

  const std::size_t plane = w * h;
  std::vector<double> values(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t idx = (i * 3 + c) * bytes_per;
      const unsigned sample = bytes_per == 2 ? (unsigned(raw[idx]) << 8) | raw[idx + 1] : raw[idx];
      values[c * plane + i] = sample / static_cast<double>(maxval);
    }
  return {Tensor({3, h, w}, std::move(values)), bytes_per == 2 ? 16 : 8};
}

}  // namespace

bool is_image_file(const fs::path& path) {
  const auto e = lower_ext(path);
  return e == ".png" || e == ".ppm";
}

Image read_image(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IngestionError("cannot read " + path.string());
  std::ifstream probe(path, std::ios::binary);
  unsigned char magic[8] = {};
  probe.read(reinterpret_cast<char*>(magic), 8);
  if (probe.gcount() == 8 && png_sig_cmp(magic, 0, 8) == 0) return read_png(path);
  if (probe.gcount() >= 2 && magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
  throw IngestionError("unrecognised image format: " + path.string());
}

void write_png(const fs::path& path, const Tensor& pixels, int bit_depth) {
  check_pixels(pixels, bit_depth, path);
  const std::size_t h = pixels.dim(1), w = pixels.dim(2), plane = h * w;
  const bool wide = bit_depth == 16;
  const unsigned maxval = wide ? 65535u : 255u;
  const std::size_t stride = w * 3 * (wide ? 2 : 1);
  std::vector<unsigned char> buffer(stride * h);
  auto v = pixels.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const unsigned q = quantize(v[c * plane + y * w + x], maxval);
        unsigned char* dst = buffer.data() + y * stride + (x * 3 + c) * (wide ? 2 : 1);
        if (wide) {
          dst[0] = static_cast<unsigned char>(q >> 8);
          dst[1] = static_cast<unsigned char>(q & 0xff);
        } else {
          dst[0] = static_cast<unsigned char>(q);
        }
      }
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;

  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IngestionError("libpng initialisation failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IngestionError("cannot encode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_ppm(const fs::path& path, const Tensor& pixels, int bit_depth) {
  check_pixels(pixels, bit_depth, path);
  const std::size_t h = pixels.dim(1), w = pixels.dim(2), plane = h * w;
  const bool wide = bit_depth == 16;
  const unsigned maxval = wide ? 65535u : 255u;
  std::vector<unsigned char> raw;
  raw.reserve(plane * 3 * (wide ? 2 : 1));
  auto v = pixels.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const unsigned q = quantize(v[c * plane + i], maxval);
      if (wide) raw.push_back(static_cast<unsigned char>(q >> 8));
      raw.push_back(static_cast<unsigned char>(q & 0xff));
    }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open " + path.string());
  out << "P6\n" << w << ' ' << h << '\n' << maxval << '\n';
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IngestionError("failed writing " + path.string());
}

void write_image(const fs::path& path, const Tensor& pixels, int bit_depth) {
  if (lower_ext(path) == ".ppm") {
    write_ppm(path, pixels, bit_depth);
  } else {
    write_png(path, pixels, bit_depth);
  }
}

}  // namespace vmamba
