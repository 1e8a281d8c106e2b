#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vmamba/checkpoint.hpp"
#include "vmamba/errors.hpp"
#include "vmamba/model.hpp"
#include "vmamba/training.hpp"

using namespace vmamba;
using namespace vmamba::testing;

namespace {

EnhanceNetConfig tiny_config() {
  EnhanceNetConfig cfg;
  cfg.input_frames = 3;
  cfg.base_channels = 4;
  cfg.stage_depths = {1};
  cfg.num_scales = 1;
  cfg.bottleneck_depth = 1;
  cfg.state_dim = 2;
  cfg.pyramid_levels = 2;
  return cfg;
}

std::vector<Tensor> random_window(std::size_t frames, std::size_t h, std::size_t w, Gen& gen) {
  std::vector<Tensor> window;
  for (std::size_t i = 0; i < frames; ++i) window.push_back(random_tensor({3, h, w}, gen, 0.0, 1.0));
  return window;
}

bool has_nonzero_grad(const Tensor& t) {
  if (!t.has_grad()) return false;
  auto g = t.grad();
  return std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; });
}

}  // namespace

TEST_CASE("output shape contract") {
  EnhanceNetConfig cfg;
  cfg.base_channels = 4;
  cfg.stage_depths = {1, 1};
  cfg.num_scales = 2;
  cfg.bottleneck_depth = 1;
  cfg.state_dim = 2;
  Rng rng(1);
  const auto w = EnhanceNetWeights::init(cfg, rng);
  Gen gen(2);
  std::vector<FeatureMap> aligned;
  for (int i = 0; i < 5; ++i) aligned.emplace_back(random_tensor({4, 8, 8}, gen));
  CHECK(enhance_forward(aligned, random_tensor({3, 8, 8}, gen), cfg, w, false).shape() == Shape{3, 8, 8});

  // Sides that are not multiples of 4 are padded and cropped back.
  for (auto [h, wd] : {std::pair<std::size_t, std::size_t>{7, 10}, {5, 3}, {1, 1}}) {
    std::vector<FeatureMap> odd;
    for (int i = 0; i < 5; ++i) odd.emplace_back(random_tensor({4, h, wd}, gen));
    CHECK(enhance_forward(odd, random_tensor({3, h, wd}, gen), cfg, w, true).shape() == Shape{3, h, wd});
  }
  aligned.pop_back();
  CHECK_THROWS_AS(enhance_forward(aligned, random_tensor({3, 8, 8}, gen), cfg, w, false), DimensionError);
}

TEST_CASE("config validation") {
  auto cfg = tiny_config();
  cfg.input_frames = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigurationError);
  cfg = tiny_config();
  cfg.stage_depths = {1, 1};
  CHECK_THROWS_AS(cfg.validate(), ConfigurationError);
  cfg = tiny_config();
  cfg.deform_kernel = 2;
  CHECK_THROWS_AS(VideoEnhancer::init(cfg, 0), ConfigurationError);
}

TEST_CASE("a fresh model passes the center frame through bitwise") {
  Gen gen(3);
  for (std::uint64_t seed : {0u, 7u, 123u}) {
    const auto model = VideoEnhancer::init(tiny_config(), seed);
    const auto window = random_window(3, 6, 10, gen);
    CHECK(bitwise_equal(model.forward(window, true), window[1]));
    CHECK(bitwise_equal(model.forward(window, false), window[1]));
  }
}

TEST_CASE("enhancement gradients match central differences") {
  auto cfg = tiny_config();
  cfg.base_channels = 2;
  Rng rng(4);
  auto w = EnhanceNetWeights::init(cfg, rng);
  Gen gen(5);
  // Wake the zero-initialized projections so every path carries gradient.
  w.for_each_param("", [&](const std::string& name, Tensor& p) {
    if (name.find("a_log") != std::string::npos) return;
    p = random_tensor(p.shape(), gen, -0.5, 0.5);
  });
  const auto r = check_gradients(
      [&](const std::vector<Tensor>& in) {
        EnhanceNetWeights ww = w;
        ww.head.weight = in[4];
        ww.encoder[0].blocks[0].ss2d.out_w = in[5];
        return enhance_forward({FeatureMap(in[0]), FeatureMap(in[1]), FeatureMap(in[2])}, in[3], cfg, ww, false);
      },
      {random_tensor({2, 4, 4}, gen), random_tensor({2, 4, 4}, gen), random_tensor({2, 4, 4}, gen),
       random_tensor({3, 4, 4}, gen), w.head.weight.clone(), w.encoder[0].blocks[0].ss2d.out_w.clone()});
  CAPTURE(r.worst_input);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("two steps at a small learning rate do not increase the loss") {
  Gen gen(6);
  int non_increasing = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto model = VideoEnhancer::init(tiny_config(), seed);
    std::vector<Tensor> params;
    for (auto& p : model.parameters()) params.push_back(p.tensor);
    AdamW opt(params, {.lr = 1e-4});
    const TrainingSample sample{random_window(3, 8, 8, gen), random_tensor({3, 8, 8}, gen, 0.0, 1.0)};
    const double first = training_step(model, {&sample, 1}, opt);
    const double second = training_step(model, {&sample, 1}, opt);
    if (second <= first) ++non_increasing;
  }
  CHECK(non_increasing >= 19);
}

TEST_CASE("gradient reaches every parameter once the zero projections open") {
  Gen gen(7);
  auto model = VideoEnhancer::init(tiny_config(), 11);
  auto named = model.parameters();
  std::vector<Tensor> params;
  for (auto& p : named) params.push_back(p.tensor);
  AdamW opt(params, {.lr = 1e-2});
  const TrainingSample sample{random_window(3, 8, 8, gen), random_tensor({3, 8, 8}, gen, 0.0, 1.0)};

  training_step(model, {&sample, 1}, opt);
  CHECK(has_nonzero_grad(model.enhance().head.weight));
  for (int step = 0; step < 2; ++step) training_step(model, {&sample, 1}, opt);
  for (const auto& p : named) {
    CAPTURE(p.name);
    CHECK(has_nonzero_grad(p.tensor));
  }
}

TEST_CASE("seeded training is bitwise reproducible") {
  Gen gen(8);
  const TrainingSample sample{random_window(3, 8, 8, gen), random_tensor({3, 8, 8}, gen, 0.0, 1.0)};
  auto run = [&] {
    auto model = VideoEnhancer::init(tiny_config(), 42);
    std::vector<Tensor> params;
    for (auto& p : model.parameters()) params.push_back(p.tensor);
    AdamW opt(params, {.lr = 1e-3});
    std::vector<double> losses;
    for (int i = 0; i < 10; ++i) losses.push_back(training_step(model, {&sample, 1}, opt));
    return losses;
  };
  const auto a = run(), b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite inputs abort training") {
  auto model = VideoEnhancer::init(tiny_config(), 0);
  std::vector<Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  AdamW opt(params, {});
  Gen gen(9);
  auto window = random_window(3, 4, 4, gen);
  window[0].mutable_data()[0] = std::nan("");
  const TrainingSample sample{window, random_tensor({3, 4, 4}, gen)};
  CHECK_THROWS_AS(training_step(model, {&sample, 1}, opt), TrainingError);
}

TEST_CASE("checkpoints round trip bit-exactly") {
  TempDir dir("ckpt");
  Gen gen(10);
  auto model = VideoEnhancer::init(tiny_config(), 5);
  std::vector<Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  AdamW opt(params, {.lr = 1e-2});
  const TrainingSample sample{random_window(3, 8, 8, gen), random_tensor({3, 8, 8}, gen, 0.0, 1.0)};
  for (int i = 0; i < 3; ++i) training_step(model, {&sample, 1}, opt);

  save_checkpoint(dir.path(), model);
  CHECK(std::filesystem::exists(dir.path() / kManifestName));
  auto loaded = load_checkpoint(dir.path());
  auto a = model.parameters(), b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(bitwise_equal(a[i].tensor, b[i].tensor));
  }
  CHECK(loaded.config().stage_depths == model.config().stage_depths);
  CHECK(bitwise_equal(loaded.forward(sample.window, true), model.forward(sample.window, true)));
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing"), IngestionError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir("ckpt_bad");
  auto model = VideoEnhancer::init(tiny_config(), 5);
  save_checkpoint(dir.path(), model);
  // Drop one tensor file named in the manifest.
  std::ifstream manifest(dir.path() / kManifestName);
  std::string line, victim;
  while (std::getline(manifest, line)) {
    if (line.rfind("param ", 0) == 0) {
      std::istringstream fields(line);
      std::string tag, name;
      fields >> tag >> name >> victim;
      break;
    }
  }
  REQUIRE_FALSE(victim.empty());
  std::filesystem::remove(dir.path() / victim);
  CHECK_THROWS_AS(load_checkpoint(dir.path()), IngestionError);
}
