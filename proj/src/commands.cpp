#include "vmamba/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "vmamba/checkpoint.hpp"
#include "vmamba/clip.hpp"
#include "vmamba/color.hpp"
#include "vmamba/errors.hpp"
#include "vmamba/image_io.hpp"
#include "vmamba/metrics.hpp"
#include "vmamba/ssm.hpp"
#include "vmamba/training.hpp"

namespace vmamba {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Training-batch sampling stream; 1 and 2 belong to model initialisation.
constexpr std::uint64_t kSamplingStream = 3;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  return out;
}

Tensor crop_frame(const Tensor& frame, std::size_t top, std::size_t left, std::size_t size) {
  const std::size_t h = frame.dim(1), w = frame.dim(2);
  std::vector<double> out(3 * size * size);
  auto v = frame.data();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) out[(c * size + y) * size + x] = v[(c * h + top + y) * w + left + x];
  return Tensor({3, size, size}, std::move(out));
}

void save_step(const fs::path& root, std::size_t step, VideoEnhancer& model) {
  std::ostringstream name;
  name << "step_" << std::setw(6) << std::setfill('0') << step;
  save_checkpoint(root / name.str(), model);
  const fs::path latest = root / "latest";
  fs::remove_all(latest);
  save_checkpoint(latest, model);
}

std::vector<Tensor> adapted_frames(const VideoClip& clip) {
  std::vector<Tensor> out;
  out.reserve(clip.size());
  const auto white = Illuminant::d65();
  for (const auto& f : clip.frames) out.push_back(chromatic_adapt(f, estimate_illuminant(f), white));
  return out;
}

// Frames are decoded to unit scale; metrics may be asked for another peak.
Tensor rescaled(const Tensor& frame, double peak) {
  if (peak == 1.0) return frame;
  auto v = frame.to_vector();
  for (auto& x : v) x *= peak;
  return Tensor(frame.shape(), std::move(v));
}

}  // namespace

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (cfg.data.low_dir.empty() || cfg.data.gt_dir.empty()) {
    throw ConfigurationError("training needs data.low_dir and data.gt_dir");
  }
  const auto low_paths = list_frames(cfg.data.low_dir);
  const auto gt_paths = list_frames(cfg.data.gt_dir);
  std::map<std::string, int> seen;  // bit 1: low, bit 2: ground truth
  for (const auto& p : low_paths) seen[p.filename().string()] |= 1;
  for (const auto& p : gt_paths) seen[p.filename().string()] |= 2;
  std::string orphans;
  for (const auto& [name, mask] : seen) {
    if (mask == 1) orphans += "\n  " + name + " (no ground truth)";
    if (mask == 2) orphans += "\n  " + name + " (no low-light frame)";
  }
  if (!orphans.empty()) throw IngestionError("unpaired training frames:" + orphans);
  if (low_paths.empty()) throw IngestionError("no training frames in " + cfg.data.low_dir.string());

  const VideoClip low = load_clip(cfg.data.low_dir);
  const VideoClip gt = load_clip(cfg.data.gt_dir);
  if (low.frames.front().shape() != gt.frames.front().shape()) {
    throw IngestionError("low-light and ground-truth resolutions differ");
  }
  const std::vector<Tensor> inputs = cfg.preprocess.adapt_color ? adapted_frames(low) : low.frames;
  const std::size_t h = low.height(), w = low.width();
  if (cfg.train.crop > std::min(h, w)) throw ConfigurationError("train.crop exceeds the frame size");

  const std::uint64_t seed = cfg.train.seed;
  VideoEnhancer model = VideoEnhancer::init(cfg.model, seed);
  std::vector<Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.train.lr;
  opt_cfg.weight_decay = cfg.train.weight_decay;
  AdamW optimizer(std::move(params), opt_cfg);
  Rng sampler = derive_rng(seed, kSamplingStream);

  const fs::path ckpt_root = cfg.data.checkpoint_dir;
  fs::create_directories(ckpt_root);
  std::ofstream loss_csv = open_csv(cfg.loss_log_path());
  loss_csv << "step,loss,wall_ms\n";
  log << "training " << cfg.train.steps << " steps on " << low.size() << " frame pairs (" << h << "x" << w
      << "), seed " << seed << '\n';

  if (cfg.train.steps == 0) {
    save_step(ckpt_root, 0, model);
    return;
  }
  const std::size_t crop = cfg.train.crop;
  for (std::size_t step = 1; step <= cfg.train.steps; ++step) {
    const auto t0 = Clock::now();
    std::vector<TrainingSample> batch;
    for (std::size_t b = 0; b < cfg.train.batch; ++b) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, low.size() - 1)(sampler);
      std::size_t top = 0, left = 0;
      if (crop) {
        top = std::uniform_int_distribution<std::size_t>(0, h - crop)(sampler);
        left = std::uniform_int_distribution<std::size_t>(0, w - crop)(sampler);
      }
      TrainingSample sample;
      for (std::size_t j : window_indices(t, low.size(), cfg.model.input_frames)) {
        sample.window.push_back(crop ? crop_frame(inputs[j], top, left, crop) : inputs[j]);
      }
      sample.target = crop ? crop_frame(gt.frames[t], top, left, crop) : gt.frames[t];
      batch.push_back(std::move(sample));
    }
    const double loss = training_step(model, batch, optimizer);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    loss_csv << step << ',' << format_double(loss) << ',' << std::fixed << std::setprecision(3) << ms
             << std::defaultfloat << '\n';
    loss_csv.flush();
    if (step % cfg.train.checkpoint_every == 0 || step == cfg.train.steps) {
      save_step(ckpt_root, step, model);
      log << "step " << step << " loss " << loss << '\n';
    }
  }
}

void cmd_enhance(const RunConfig& cfg, const fs::path& input, const fs::path& output, bool adapt_color,
                 std::ostream& log) {
  const fs::path ckpt = cfg.checkpoint_path();
  if (!fs::exists(ckpt / kManifestName)) throw IngestionError("missing checkpoint: " + ckpt.string());
  const VideoEnhancer model = load_checkpoint(ckpt);
  const VideoClip clip = load_clip(input);
  const bool adapt = adapt_color || cfg.preprocess.adapt_color;
  const std::vector<Tensor> frames = adapt ? adapted_frames(clip) : clip.frames;
  fs::create_directories(output);

  NoGradGuard no_grad;
  for (std::size_t t = 0; t < clip.size(); ++t) {
    const auto t0 = Clock::now();
    std::vector<Tensor> window;
    for (std::size_t j : window_indices(t, clip.size(), model.config().input_frames)) window.push_back(frames[j]);
    const Tensor out = model.forward(window, true);
    const fs::path dst = output / (clip.paths[t].stem().string() + ".png");
    write_png(dst, out, clip.bit_depths[t]);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    log << "frame " << t << ' ' << dst.filename().string() << ' ' << std::fixed << std::setprecision(1) << ms
        << " ms\n"
        << std::defaultfloat;
  }
}

void cmd_metrics(const fs::path& ref, const fs::path& test, const fs::path& out_csv, double peak,
                 std::ostream& log) {
  const VideoClip a = load_clip(ref);
  const VideoClip b = load_clip(test);
  if (a.size() != b.size()) {
    throw IngestionError("frame counts differ: " + std::to_string(a.size()) + " reference vs " +
                         std::to_string(b.size()) + " test");
  }
  std::ofstream out = open_csv(out_csv);
  out << "frame_index,psnr_db,ssim\n";
  double psnr_sum = 0.0, ssim_sum = 0.0;
  std::size_t finite = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Tensor fa = rescaled(a.frames[i], peak), fb = rescaled(b.frames[i], peak);
    const double p = psnr(fa, fb, peak);
    const double s = ssim(fa, fb, peak);
    out << i << ',' << (std::isinf(p) ? std::string("inf") : format_double(p)) << ',' << format_double(s) << '\n';
    if (std::isfinite(p)) {
      psnr_sum += p;
      ++finite;
    }
    ssim_sum += s;
  }
  log << "frames " << a.size() << " mean_psnr_db "
      << (finite ? psnr_sum / static_cast<double>(finite) : std::numeric_limits<double>::infinity()) << " mean_ssim "
      << ssim_sum / static_cast<double>(a.size()) << '\n';
}

std::vector<ScanBenchRow> run_scan_bench(const ScanBenchOptions& opts, std::ostream* progress) {
  if (opts.repeats == 0) throw ConfigurationError("scan-bench: repeats must be positive");
  constexpr ScanAlgorithm kModes[] = {ScanAlgorithm::kSequential, ScanAlgorithm::kParallel,
                                      ScanAlgorithm::kConvolutional};
  NoGradGuard no_grad;
  Rng rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> log_rate(std::log(0.5), std::log(8.0));
  std::uniform_real_distribution<double> step(1e-3, 1e-1);

  struct Case {
    std::size_t length, dim;
    DiscreteSSM ssm;
    Tensor x;
  };
  std::vector<Case> cases;
  std::vector<ScanBenchRow> rows;
  for (std::size_t d : opts.dims) {
    for (std::size_t L : opts.lengths) {
      if (d == 0 || L == 0) throw ConfigurationError("scan-bench: lengths and dims must be positive");
      std::vector<double> a(d), b(d), c(d);
      for (std::size_t i = 0; i < d; ++i) {
        a[i] = -std::exp(log_rate(rng));
        b[i] = unit(rng);
        c[i] = unit(rng);
      }
      const auto ssm = discretize_zoh(SSMParams::make_diagonal(a, b, c, unit(rng)), step(rng));
      std::vector<double> xs(L);
      for (auto& v : xs) v = unit(rng);
      const Tensor x({L}, std::move(xs));

      std::vector<std::vector<double>> outputs;
      for (auto mode : kModes) outputs.push_back(scan(ssm, x, mode).to_vector());
      double disagreement[3] = {0.0, 0.0, 0.0};
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) {
          double m = 0.0;
          for (std::size_t k = 0; k < L; ++k) m = std::max(m, std::abs(outputs[i][k] - outputs[j][k]));
          disagreement[i] = std::max(disagreement[i], m);
          disagreement[j] = std::max(disagreement[j], m);
          if (!(m <= opts.tolerance)) {
            std::ostringstream msg;
            msg << "scan-bench: " << to_string(kModes[i]) << " and " << to_string(kModes[j])
                << " disagree by " << m << " (tolerance " << opts.tolerance << ") at L=" << L << ", d=" << d;
            throw NumericError(msg.str());
          }
        }
      for (std::size_t i = 0; i < 3; ++i) rows.push_back({to_string(kModes[i]), L, d, 0.0, disagreement[i]});
      cases.push_back({L, d, ssm, x});
    }
  }

  // Rounds visit every case and mode in turn, so slow spells on the host spread across all lengths
  // instead of landing on whichever length happened to be running.
  std::vector<std::vector<double>> times(rows.size());
  for (std::size_t r = 0; r < opts.repeats; ++r) {
    for (std::size_t k = 0; k < cases.size(); ++k) {
      for (std::size_t i = 0; i < 3; ++i) {
        const auto t0 = Clock::now();
        const Tensor y = scan(cases[k].ssm, cases[k].x, kModes[i]);
        times[3 * k + i].push_back(std::chrono::duration<double, std::nano>(Clock::now() - t0).count());
        if (y.numel() != cases[k].length) throw ContractError("scan-bench: wrong output length");
      }
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto& t = times[k];
    std::nth_element(t.begin(), t.begin() + static_cast<long>(t.size() / 2), t.end());
    rows[k].median_ns = t[t.size() / 2];
    if (progress) {
      *progress << rows[k].mode << " L=" << rows[k].length << " d=" << rows[k].dim << " " << rows[k].median_ns
                << " ns\n";
    }
  }
  return rows;
}

void cmd_scan_bench(const ScanBenchOptions& opts, const fs::path& out_csv, std::ostream& log) {
  const auto rows = run_scan_bench(opts, &log);
  std::ofstream out = open_csv(out_csv);
  out << "mode,L,d,median_ns,max_abs_disagreement\n";
  for (const auto& r : rows) {
    out << r.mode << ',' << r.length << ',' << r.dim << ',' << std::fixed << std::setprecision(1) << r.median_ns
        << std::defaultfloat << ',' << format_double(r.max_abs_disagreement) << '\n';
  }
}

}  // namespace vmamba
