#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vmamba/commands.hpp"
#include "vmamba/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Low-light video enhancement with visual state space models"};
  app.require_subcommand(1);

  std::string config_path, input_dir, output_dir;
  bool adapt_color = false;
  auto* enhance = app.add_subcommand("enhance", "Enhance a frame directory with a trained checkpoint");
  enhance->add_option("--config", config_path, "Run configuration (JSON)")->required();
  enhance->add_option("--input", input_dir, "Directory of low-light frames")->required();
  enhance->add_option("--output", output_dir, "Directory for enhanced PNG frames")->required();
  enhance->add_flag("--adapt-color", adapt_color, "Gray-world chromatic adaptation before enhancement");

  auto* train = app.add_subcommand("train", "Train on paired low-light / ground-truth frames");
  train->add_option("--config", config_path, "Run configuration (JSON)")->required();

  std::string ref_dir, test_dir, out_csv;
  double peak = 1.0;
  auto* metrics = app.add_subcommand("metrics", "Per-frame PSNR and SSIM between two frame directories");
  metrics->add_option("--ref", ref_dir, "Reference frames")->required();
  metrics->add_option("--test", test_dir, "Frames under test")->required();
  metrics->add_option("--out", out_csv, "Output CSV")->required();
  metrics->add_option("--peak", peak, "Signal peak for unit-scale frames rescaled to this range")
      ->check(CLI::PositiveNumber);

  vmamba::ScanBenchOptions bench;
  auto* scan_bench = app.add_subcommand("scan-bench", "Time the three scan algorithms");
  scan_bench->add_option("--lengths", bench.lengths, "Sequence lengths")->delimiter(',');
  scan_bench->add_option("--dims", bench.dims, "State dimensions")->delimiter(',');
  scan_bench->add_option("--repeats", bench.repeats, "Timed repetitions per mode")->check(CLI::PositiveNumber);
  scan_bench->add_option("--seed", bench.seed, "Seed for the random systems");
  scan_bench->add_option("--out", out_csv, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*enhance) {
      vmamba::cmd_enhance(vmamba::load_run_config(config_path), input_dir, output_dir, adapt_color, std::cout);
    } else if (*train) {
      vmamba::cmd_train(vmamba::load_run_config(config_path), std::cout);
    } else if (*metrics) {
      vmamba::cmd_metrics(ref_dir, test_dir, out_csv, peak, std::cout);
    } else if (*scan_bench) {
      vmamba::cmd_scan_bench(bench, out_csv, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
