#include "vmamba/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "vmamba/errors.hpp"

namespace vmamba {

namespace fs = std::filesystem;

namespace {

std::string join_sizes(const std::vector<std::size_t>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& s, char sep) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(std::stoul(item));
  return out;
}

std::string file_name_for(const std::string& param) {
  std::string f = param;
  std::replace(f.begin(), f.end(), '.', '_');
  return f + ".vsst";
}

}  // namespace

void save_checkpoint(const fs::path& dir, VideoEnhancer& model) {
  fs::create_directories(dir);
  const auto& cfg = model.config();
  std::ofstream manifest(dir / kManifestName);
  if (!manifest) throw IngestionError("cannot write checkpoint manifest in " + dir.string());
  manifest << "# vmamba checkpoint v1\n";
  manifest << "config input_frames " << cfg.input_frames << '\n'
           << "config base_channels " << cfg.base_channels << '\n'
           << "config stage_depths " << join_sizes(cfg.stage_depths, ',') << '\n'
           << "config bottleneck_depth " << cfg.bottleneck_depth << '\n'
           << "config num_scales " << cfg.num_scales << '\n'
           << "config state_dim " << cfg.state_dim << '\n'
           << "config ffn_ratio " << cfg.ffn_ratio << '\n'
           << "config pyramid_levels " << cfg.pyramid_levels << '\n'
           << "config deform_kernel " << cfg.deform_kernel << '\n'
           << "config scan " << to_string(cfg.scan) << '\n'
           << "config bbar " << to_string(cfg.bbar) << '\n';
  for (auto& [name, tensor] : model.parameters()) {
    const auto file = file_name_for(name);
    save_tensor(tensor, dir / file);
    const std::string shape = tensor.rank() ? join_sizes(tensor.shape(), 'x') : "scalar";
    manifest << "param " << name << ' ' << file << ' ' << shape << ' ' << parameter_stage(name) << '\n';
  }
  if (!manifest) throw IngestionError("failed writing checkpoint manifest in " + dir.string());
}

VideoEnhancer load_checkpoint(const fs::path& dir) {
  std::ifstream manifest(dir / kManifestName);
  if (!manifest) throw IngestionError("checkpoint not found: " + (dir / kManifestName).string());

  EnhanceNetConfig cfg;
  std::map<std::string, std::pair<std::string, std::string>> files;  // name -> (file, shape)
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind, key, value;
    ls >> kind >> key >> value;
    const auto where = dir.string() + ":" + std::to_string(line_no);
    try {
      if (kind == "config") {
        if (key == "input_frames") cfg.input_frames = std::stoul(value);
        else if (key == "base_channels") cfg.base_channels = std::stoul(value);
        else if (key == "stage_depths") cfg.stage_depths = split_sizes(value, ',');
        else if (key == "bottleneck_depth") cfg.bottleneck_depth = std::stoul(value);
        else if (key == "num_scales") cfg.num_scales = std::stoul(value);
        else if (key == "state_dim") cfg.state_dim = std::stoul(value);
        else if (key == "ffn_ratio") cfg.ffn_ratio = std::stoul(value);
        else if (key == "pyramid_levels") cfg.pyramid_levels = std::stoul(value);
        else if (key == "deform_kernel") cfg.deform_kernel = std::stoul(value);
        else if (key == "scan") cfg.scan = parse_scan_algorithm(value);
        else if (key == "bbar") cfg.bbar = parse_bbar_mode(value);
        else throw IngestionError("unknown config key '" + key + "' at " + where);
      } else if (kind == "param") {
        std::string shape;
        ls >> shape;
        files[key] = {value, shape};
      } else {
        throw IngestionError("malformed manifest line at " + where);
      }
    } catch (const std::invalid_argument& e) {
      throw IngestionError("bad manifest value at " + where + ": " + e.what());
    }
  }

  VideoEnhancer model = VideoEnhancer::init(cfg, 0);
  for (auto& [name, tensor] : model.parameters()) {
    auto it = files.find(name);
    if (it == files.end()) throw IngestionError("checkpoint " + dir.string() + " lacks parameter " + name);
    Tensor loaded = load_tensor(dir / it->second.first);
    if (loaded.shape() != tensor.shape()) {
      throw IngestionError("checkpoint parameter " + name + " has shape " + shape_to_string(loaded.shape()) +
                           ", model expects " + shape_to_string(tensor.shape()));
    }
    auto dst = tensor.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
    files.erase(it);
  }
  if (!files.empty()) throw IngestionError("checkpoint " + dir.string() + " has unknown parameter " + files.begin()->first);
  return model;
}

}  // namespace vmamba
