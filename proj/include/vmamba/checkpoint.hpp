#pragma once

#include <filesystem>

#include "vmamba/model.hpp"

namespace vmamba {

/// A checkpoint is a directory holding one VSST tensor file per parameter and
/// `manifest.txt`:
///   config <key> <value>                      (architecture, one per line)
///   param <name> <file> <shape AxBxC> <stage>
inline constexpr const char* kManifestName = "manifest.txt";

void save_checkpoint(const std::filesystem::path& dir, VideoEnhancer& model);
// Rebuilds the architecture from the manifest and loads every parameter.
// Throws IngestionError on missing, extra or mis-shaped tensors.
VideoEnhancer load_checkpoint(const std::filesystem::path& dir);

}  // namespace vmamba
