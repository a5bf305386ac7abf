#include "dusa/config.hpp"

#include <cmath>
#include <sstream>

#include "dusa/checkpoint.hpp"
#include "dusa/core.hpp"

namespace dusa::config {

Json defaults() {
  return Json::parse(R"({
    "task": "classify",
    "method": "dusa",
    "protocol": "fully",
    "seed": 0,
    "out": "runs",
    "checkpoints": "checkpoints",
    "timing": false,
    "world": {"classes": 8, "dim": 8, "train": 8000, "test": 2000, "radius": 4.0,
              "cov_scale": 0.35355339059327373, "cov_floor": 0.5, "seed": 0},
    "schedule": {"steps": 1000, "beta_first": 0.0001, "beta_last": 0.02},
    "classifier": {"hidden": [64, 64], "epochs": 60, "batch": 64, "lr": 0.001},
    "denoiser": {"hidden": [128, 128], "time_dim": 32, "class_dim": 16, "kind": "epsilon",
                 "epochs": 100, "batch": 64, "lr": 0.001, "p_null": 0.1},
    "stream": {"corruptions": ["add_noise:3"], "batch": 64, "samples": 1024},
    "adapt": {"lr": 0.001, "denoiser_lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "accumulate": 1},
    "dusa": {"t": 100, "mode": "dusa", "kind": "epsilon"},
    "csm": {"k": 4, "m": 2, "law": "softmax", "temperature": 1.0},
    "diffusion_tta": {"timesteps": 6},
    "seg": {"budget": 20, "height": 8, "width": 8, "channels": 2, "classes": 4, "min_sites": 3, "max_sites": 6,
            "radius": 2.0, "pixel_std": 0.5, "anisotropy": 0.3, "train": 2000, "test": 500, "pos_dim": 8,
            "batch": 16, "samples": 256,
            "labeler": {"hidden": [64, 64], "epochs": 20, "batch": 64, "lr": 0.001},
            "denoiser": {"hidden": [256, 256], "time_dim": 32, "class_dim": 16, "epochs": 100, "batch": 64,
                         "lr": 0.001, "p_null": 0.1}}
  })");
}

namespace {

void overlay(Json& base, const Json& doc, const std::string& path) {
  for (const auto& [key, value] : doc.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw std::invalid_argument("unknown config key '" + here + "'");
    if (base[key].is_object() && value.is_object())
      overlay(base[key], value, here);
    else
      base[key] = value;
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, sep)) out.push_back(part);
  return out;
}

Json* find(Json& cfg, const std::string& dotted) {
  Json* node = &cfg;
  for (const auto& key : split(dotted, '.')) {
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &(*node)[key];
  }
  return node;
}

Json parse_like(const Json& like, const std::string& text, const std::string& key) {
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw std::invalid_argument("expected true or false");
    }
    std::size_t used = 0;
    if (like.is_number_integer()) {
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
    if (like.is_number()) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
    if (like.is_array()) {
      const Json elem = like.empty() ? Json("") : like.front();
      Json out = Json::array();
      for (const auto& part : split(text, ',')) out.push_back(parse_like(elem, part, key));
      return out;
    }
    if (like.is_string()) return text;
  } catch (const std::logic_error& e) {
    throw std::invalid_argument("bad value '" + text + "' for config key '" + key + "': " + e.what());
  }
  throw std::invalid_argument("config key '" + key + "' cannot be set from the command line");
}

}  // namespace

Json merged(const Json& doc) {
  Json cfg = defaults();
  if (!doc.is_null()) overlay(cfg, doc, "");
  return cfg;
}

Json load(const std::filesystem::path& path) { return merged(io::read_json(path)); }

const Json& at(const Json& cfg, const std::string& dotted) {
  const Json* node = find(const_cast<Json&>(cfg), dotted);
  if (!node) throw std::invalid_argument("unknown config key '" + dotted + "'");
  return *node;
}

bool has(const Json& cfg, const std::string& dotted) { return find(const_cast<Json&>(cfg), dotted) != nullptr; }

void set(Json& cfg, const std::string& dotted, const std::string& text) {
  Json* node = find(cfg, dotted);
  if (!node || node->is_object()) throw std::invalid_argument("unknown config key '" + dotted + "'");
  *node = parse_like(*node, text, dotted);
}

std::string hash(const Json& cfg) {
  const std::string dump = cfg.dump();
  return io::hex(fnv1a64(dump.data(), dump.size()));
}

}  // namespace dusa::config
