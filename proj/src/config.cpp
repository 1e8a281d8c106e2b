#include "vmamba/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vmamba/errors.hpp"

namespace vmamba {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Setter = std::function<void(const json&)>;

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigurationError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw ConfigurationError("config key '" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

void apply_section(const json& root, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!root.contains(section)) return;
  const json& obj = root.at(section);
  if (!obj.is_object()) throw ConfigurationError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigurationError("unknown config key '" + section + "." + key + "'");
    it->second(value);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (!(train.lr > 0.0 && train.lr <= 1.0)) throw ConfigurationError("train.lr must be in (0, 1]");
  if (!(train.weight_decay >= 0.0 && train.weight_decay < 1.0)) {
    throw ConfigurationError("train.weight_decay must be in [0, 1)");
  }
  if (train.steps > 10'000'000) throw ConfigurationError("train.steps must be at most 1e7");
  if (train.batch < 1 || train.batch > 64) throw ConfigurationError("train.batch must be in [1, 64]");
  if (train.checkpoint_every < 1) throw ConfigurationError("train.checkpoint_every must be >= 1");
  if (train.crop != 0 && train.crop < 8) throw ConfigurationError("train.crop must be 0 or >= 8");
}

fs::path RunConfig::checkpoint_path() const {
  return data.checkpoint.empty() ? data.checkpoint_dir / "latest" : data.checkpoint;
}

fs::path RunConfig::loss_log_path() const {
  return data.loss_log.empty() ? data.checkpoint_dir / "loss.csv" : data.loss_log;
}

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigurationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigurationError("config must be a JSON object");
  for (const auto& [section, _] : root.items()) {
    if (section != "model" && section != "train" && section != "data" && section != "preprocess") {
      throw ConfigurationError("unknown config section '" + section + "'");
    }
  }

  RunConfig cfg;
  auto& m = cfg.model;
  auto count = [](std::size_t& dst, const char* key) {
    return Setter([&dst, key](const json& v) { dst = get_count(v, key); });
  };
  apply_section(root, "model",
                {{"input_frames", count(m.input_frames, "model.input_frames")},
                 {"base_channels", count(m.base_channels, "model.base_channels")},
                 {"stage_depths",
                  [&m](const json& v) {
                    if (!v.is_array()) throw ConfigurationError("model.stage_depths must be an array");
                    m.stage_depths.clear();
                    for (const auto& d : v) m.stage_depths.push_back(get_count(d, "model.stage_depths"));
                  }},
                 {"bottleneck_depth", count(m.bottleneck_depth, "model.bottleneck_depth")},
                 {"num_scales", count(m.num_scales, "model.num_scales")},
                 {"state_dim", count(m.state_dim, "model.state_dim")},
                 {"ffn_ratio", count(m.ffn_ratio, "model.ffn_ratio")},
                 {"pyramid_levels", count(m.pyramid_levels, "model.pyramid_levels")},
                 {"deform_kernel", count(m.deform_kernel, "model.deform_kernel")},
                 {"scan", [&m](const json& v) { m.scan = parse_scan_algorithm(get_as<std::string>(v, "model.scan")); }},
                 {"bbar", [&m](const json& v) { m.bbar = parse_bbar_mode(get_as<std::string>(v, "model.bbar")); }}});

  auto& t = cfg.train;
  apply_section(root, "train",
                {{"lr", [&t](const json& v) { t.lr = get_as<double>(v, "train.lr"); }},
                 {"weight_decay", [&t](const json& v) { t.weight_decay = get_as<double>(v, "train.weight_decay"); }},
                 {"steps", count(t.steps, "train.steps")},
                 {"seed",
                  [&t](const json& v) {
                    if (!v.is_number_unsigned()) throw ConfigurationError("train.seed must be a non-negative integer");
                    t.seed = v.get<std::uint64_t>();
                  }},
                 {"batch", count(t.batch, "train.batch")},
                 {"checkpoint_every", count(t.checkpoint_every, "train.checkpoint_every")},
                 {"crop", count(t.crop, "train.crop")}});

  auto& d = cfg.data;
  auto path = [&base_dir](fs::path& dst, const char* key) {
    return Setter([&dst, &base_dir, key](const json& v) { dst = resolve(base_dir, get_as<std::string>(v, key)); });
  };
  apply_section(root, "data",
                {{"low_dir", path(d.low_dir, "data.low_dir")},
                 {"gt_dir", path(d.gt_dir, "data.gt_dir")},
                 {"checkpoint_dir", path(d.checkpoint_dir, "data.checkpoint_dir")},
                 {"checkpoint", path(d.checkpoint, "data.checkpoint")},
                 {"loss_log", path(d.loss_log, "data.loss_log")}});
  if (!root.contains("data") || !root.at("data").contains("checkpoint_dir")) {
    d.checkpoint_dir = resolve(base_dir, "checkpoints");
  }

  auto& p = cfg.preprocess;
  apply_section(root, "preprocess",
                {{"adapt_color", [&p](const json& v) { p.adapt_color = get_as<bool>(v, "preprocess.adapt_color"); }}});

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigurationError(e.what());
  }
  return cfg;
}

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv(kSeedEnvVar);
  if (!env || !*env) return;
  std::size_t used = 0;
  unsigned long long seed = 0;
  try {
    seed = std::stoull(env, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || env[used] != '\0' || env[0] == '-') {
    throw ConfigurationError(std::string(kSeedEnvVar) + " must be a non-negative integer, got '" + env + "'");
  }
  cfg.train.seed = seed;
}

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigurationError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_run_config(ss.str(), file.parent_path());
  apply_seed_override(cfg);
  return cfg;
}

}  // namespace vmamba
