#pragma once

#include <filesystem>
#include <string>

#include "dusa/diffusion.hpp"
#include "dusa/task_models.hpp"
#include "json.hpp"

namespace dusa::io {

/// A plain-text parameter dump with a manifest describing the architecture.
struct Checkpoint {
  nlohmann::json manifest;
  ParamSet params;
};

nlohmann::json params_to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& doc);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

void save(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load(const std::filesystem::path& path);

/// Hex FNV-1a of a file's bytes.
std::string file_hash(const std::filesystem::path& path);
std::string hex(std::uint64_t v);

class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws CheckpointMismatch naming the first key of `expected` whose value
/// differs in `manifest`.
void require_manifest(const nlohmann::json& manifest, const nlohmann::json& expected, const std::string& what);

nlohmann::json manifest_of(const task::Classifier& c);
nlohmann::json manifest_of(const task::DenseLabeler& dl);
nlohmann::json manifest_of(const diffusion::Denoiser& dn, const diffusion::NoiseSchedule& s);

Checkpoint to_checkpoint(const task::Classifier& c);
Checkpoint to_checkpoint(const task::DenseLabeler& dl);
Checkpoint to_checkpoint(const diffusion::Denoiser& dn, const diffusion::NoiseSchedule& s);

task::Classifier classifier_from(const Checkpoint& ck);
task::DenseLabeler labeler_from(const Checkpoint& ck);
diffusion::Denoiser denoiser_from(const Checkpoint& ck);

}  // namespace dusa::io
