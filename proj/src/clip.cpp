#include "vmamba/clip.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "vmamba/errors.hpp"
#include "vmamba/image_io.hpp"

namespace vmamba {

namespace fs = std::filesystem;

bool natural_less(const std::string& a, const std::string& b) {
  auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (is_digit(a[i]) && is_digit(b[j])) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && is_digit(a[ie])) ++ie;
      while (je < b.size() && is_digit(b[je])) ++je;
      // Strip leading zeros, then longer run means larger number.
      std::size_t is = i, js = j;
      while (is + 1 < ie && a[is] == '0') ++is;
      while (js + 1 < je && b[js] == '0') ++js;
      const std::size_t la = ie - is, lb = je - js;
      if (la != lb) return la < lb;
      const int cmp = a.compare(is, la, b, js, lb);
      if (cmp != 0) return cmp < 0;
      // Equal value: fewer leading zeros first, for a total order.
      if (ie - i != je - j) return ie - i < je - j;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return static_cast<unsigned char>(a[i]) < static_cast<unsigned char>(b[j]);
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& x, const fs::path& y) { return natural_less(x.filename().string(), y.filename().string()); });
  return out;
}

VideoClip load_clip(const fs::path& dir) {
  VideoClip clip;
  clip.paths = list_frames(dir);
  if (clip.paths.empty()) throw IngestionError("no PNG or PPM frames in " + dir.string());
  for (const auto& p : clip.paths) {
    Image img = read_image(p);
    if (!clip.frames.empty() && img.pixels.shape() != clip.frames.front().shape()) {
      throw IngestionError("mixed resolutions: " + p.string() + " is " + shape_to_string(img.pixels.shape()) +
                           ", expected " + shape_to_string(clip.frames.front().shape()));
    }
    clip.frames.push_back(std::move(img.pixels));
    clip.bit_depths.push_back(img.bit_depth);
  }
  std::ifstream fps_file(dir / "fps");
  double fps = 0.0;
  if (fps_file >> fps && fps > 0.0) clip.fps = fps;
  return clip;
}

std::vector<std::size_t> window_indices(std::size_t t, std::size_t count, std::size_t window) {
  if (window % 2 == 0) throw ConfigurationError("temporal window must be odd");
  if (count == 0 || t >= count) throw DimensionError("window centre outside the clip");
  const auto half = static_cast<long>(window / 2);
  std::vector<std::size_t> idx;
  idx.reserve(window);
  for (long k = -half; k <= half; ++k) {
    const long j = std::clamp(static_cast<long>(t) + k, 0L, static_cast<long>(count) - 1);
    idx.push_back(static_cast<std::size_t>(j));
  }
  return idx;
}

}  // namespace vmamba
