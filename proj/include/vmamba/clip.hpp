#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vmamba/tensor.hpp"

namespace vmamba {

struct VideoClip {
  std::vector<Tensor> frames;  // [3, H, W] each, unit scale
  std::vector<std::filesystem::path> paths;
  std::vector<int> bit_depths;
  std::optional<double> fps;

  std::size_t size() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().dim(1); }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().dim(2); }
};

// Compares digit runs by numeric value, everything else bytewise: "2" < "10".
bool natural_less(const std::string& a, const std::string& b);

// Image files (PNG / PPM) in `dir`, naturally sorted by file name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Loads every frame of a directory. An optional `fps` file holding a single
/// number is read as metadata. Throws IngestionError on an empty directory,
/// an unreadable file or mixed resolutions.
VideoClip load_clip(const std::filesystem::path& dir);

/// Frame indices of the window centred on t, edge-replicated at the clip
/// boundaries. `window` must be odd.
std::vector<std::size_t> window_indices(std::size_t t, std::size_t count, std::size_t window);

}  // namespace vmamba
