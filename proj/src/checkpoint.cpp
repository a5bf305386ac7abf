#include "dusa/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dusa::io {

nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, value] : params) {
    std::vector<double> flat(static_cast<std::size_t>(value.size()));
    for (Index r = 0, k = 0; r < value.rows(); ++r)
      for (Index c = 0; c < value.cols(); ++c) flat[k++] = value(r, c);
    doc[name] = {{"rows", value.rows()}, {"cols", value.cols()}, {"values", flat}};
  }
  return doc;
}

ParamSet params_from_json(const nlohmann::json& doc) {
  ParamSet params;
  for (const auto& [name, entry] : doc.items()) {
    const Index rows = entry.at("rows").get<Index>(), cols = entry.at("cols").get<Index>();
    const auto flat = entry.at("values").get<std::vector<double>>();
    if (static_cast<Index>(flat.size()) != rows * cols) throw ShapeError("checkpoint: value count mismatch for " + name);
    Mat m(rows, cols);
    for (Index r = 0, k = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = flat[k++];
    params.emplace(name, std::move(m));
  }
  return params;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(1) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void save(const std::filesystem::path& path, const Checkpoint& ck) {
  write_json(path, {{"manifest", ck.manifest}, {"params", params_to_json(ck.params)}});
}

Checkpoint load(const std::filesystem::path& path) {
  const nlohmann::json doc = read_json(path);
  return {doc.at("manifest"), params_from_json(doc.at("params"))};
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex(fnv1a64(bytes.data(), bytes.size()));
}

void require_manifest(const nlohmann::json& manifest, const nlohmann::json& expected, const std::string& what) {
  for (const auto& [key, value] : expected.items()) {
    if (!manifest.contains(key) || manifest.at(key) != value) {
      std::ostringstream msg;
      msg << what << " checkpoint mismatch on '" << key << "': expected " << value.dump() << ", found "
          << (manifest.contains(key) ? manifest.at(key).dump() : std::string("nothing"));
      throw CheckpointMismatch(msg.str());
    }
  }
}

nlohmann::json manifest_of(const task::Classifier& c) {
  return {{"model", "classifier"},
          {"dim", c.config.dim},
          {"classes", c.config.classes},
          {"hidden", c.config.hidden},
          {"source_accuracy", c.source_accuracy}};
}

nlohmann::json manifest_of(const task::DenseLabeler& dl) {
  return {{"model", "dense_labeler"},     {"height", dl.config.height},   {"width", dl.config.width},
          {"channels", dl.config.channels}, {"classes", dl.config.classes}, {"pos_dim", dl.config.pos_dim},
          {"hidden", dl.config.hidden}};
}

nlohmann::json manifest_of(const diffusion::Denoiser& dn, const diffusion::NoiseSchedule& s) {
  return {{"model", "denoiser"},
          {"dim", dn.config.dim},
          {"classes", dn.config.classes},
          {"time_dim", dn.config.time_dim},
          {"class_dim", dn.config.class_dim},
          {"hidden", dn.config.hidden},
          {"kind", diffusion::to_string(dn.config.kind)},
          {"schedule_steps", s.steps},
          {"schedule_hash", hex(s.fingerprint())}};
}

Checkpoint to_checkpoint(const task::Classifier& c) { return {manifest_of(c), c.params}; }
Checkpoint to_checkpoint(const task::DenseLabeler& dl) { return {manifest_of(dl), dl.params}; }
Checkpoint to_checkpoint(const diffusion::Denoiser& dn, const diffusion::NoiseSchedule& s) {
  return {manifest_of(dn, s), dn.params};
}

task::Classifier classifier_from(const Checkpoint& ck) {
  require_manifest(ck.manifest, {{"model", "classifier"}}, "classifier");
  task::Classifier c;
  c.config.dim = ck.manifest.at("dim");
  c.config.classes = ck.manifest.at("classes");
  c.config.hidden = ck.manifest.at("hidden").get<std::vector<int>>();
  c.source_accuracy = ck.manifest.value("source_accuracy", 0.0);
  c.params = ck.params;
  return c;
}

task::DenseLabeler labeler_from(const Checkpoint& ck) {
  require_manifest(ck.manifest, {{"model", "dense_labeler"}}, "dense labeler");
  task::DenseLabeler dl;
  dl.config.height = ck.manifest.at("height");
  dl.config.width = ck.manifest.at("width");
  dl.config.channels = ck.manifest.at("channels");
  dl.config.classes = ck.manifest.at("classes");
  dl.config.pos_dim = ck.manifest.at("pos_dim");
  dl.config.hidden = ck.manifest.at("hidden").get<std::vector<int>>();
  dl.params = ck.params;
  return dl;
}

diffusion::Denoiser denoiser_from(const Checkpoint& ck) {
  require_manifest(ck.manifest, {{"model", "denoiser"}}, "denoiser");
  diffusion::Denoiser dn;
  dn.config.dim = ck.manifest.at("dim");
  dn.config.classes = ck.manifest.at("classes");
  dn.config.time_dim = ck.manifest.at("time_dim");
  dn.config.class_dim = ck.manifest.at("class_dim");
  dn.config.hidden = ck.manifest.at("hidden").get<std::vector<int>>();
  dn.config.kind = diffusion::parse_prediction_kind(ck.manifest.at("kind"));
  dn.params = ck.params;
  return dn;
}

}  // namespace dusa::io
