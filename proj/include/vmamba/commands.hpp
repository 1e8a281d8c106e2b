#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vmamba/config.hpp"

namespace vmamba {

/// Trains on paired low-light / ground-truth directories (matching file
/// names). Writes checkpoints to checkpoint_dir/step_NNNNNN every
/// checkpoint_every steps and at the end, mirrors the last one in
/// checkpoint_dir/latest, and logs "step,loss,wall_ms" rows.
void cmd_train(const RunConfig& cfg, std::ostream& log);

/// Enhances every frame of `input` into `output` (PNG, same stem, same bit
/// depth). Color adaptation runs when `adapt_color` or the config flag is set.
void cmd_enhance(const RunConfig& cfg, const std::filesystem::path& input, const std::filesystem::path& output,
                 bool adapt_color, std::ostream& log);

/// Writes "frame_index,psnr_db,ssim" rows for frame pairs of two clips.
void cmd_metrics(const std::filesystem::path& ref, const std::filesystem::path& test,
                 const std::filesystem::path& out_csv, double peak, std::ostream& log);

struct ScanBenchOptions {
  std::vector<std::size_t> lengths{64, 1024, 8192};
  std::vector<std::size_t> dims{8, 16};
  std::size_t repeats = 7;
  std::uint64_t seed = 0;
  double tolerance = 1e-8;
};

struct ScanBenchRow {
  std::string mode;
  std::size_t length = 0;
  std::size_t dim = 0;
  double median_ns = 0.0;
  double max_abs_disagreement = 0.0;
};

/// Times the sequential, parallel and convolutional scans on random stable
/// diagonal LTI systems. Outputs are cross-checked before anything is timed;
/// a disagreement above tolerance throws NumericError. Repeats are taken in
/// rounds over all cases; each row reports the median.
std::vector<ScanBenchRow> run_scan_bench(const ScanBenchOptions& opts, std::ostream* progress = nullptr);
void cmd_scan_bench(const ScanBenchOptions& opts, const std::filesystem::path& out_csv, std::ostream& log);

}  // namespace vmamba
