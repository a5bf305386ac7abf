#pragma once

#include <filesystem>
#include <optional>

#include "dusa/config.hpp"
#include "dusa/corruption.hpp"
#include "dusa/diffusion.hpp"
#include "dusa/task_models.hpp"
#include "dusa/world.hpp"

namespace dusa::lab {

struct SegLab {
  world::SegWorld world;
  world::SegSamples train;
  world::SegSamples test;
  corruption::Params corruption;
  task::DenseLabeler labeler;
  diffusion::Denoiser denoiser;  // over flattened grids, one class condition
};

/// A world together with its pretrained source models.
struct Lab {
  world::ClassWorld world;
  corruption::Params corruption;
  diffusion::NoiseSchedule schedule;
  task::Classifier classifier;
  diffusion::Denoiser denoiser;
  std::optional<SegLab> seg;
};

world::WorldConfig world_config(const config::Json& cfg);
world::SegWorldConfig seg_world_config(const config::Json& cfg);
diffusion::NoiseSchedule schedule(const config::Json& cfg);
task::ClassifierConfig classifier_config(const config::Json& cfg);
diffusion::DenoiserConfig denoiser_config(const config::Json& cfg);
task::LabelerConfig labeler_config(const config::Json& cfg);
diffusion::DenoiserConfig seg_denoiser_config(const config::Json& cfg);

/// World, corruption geometry and schedule only; models are empty.
Lab build(const config::Json& cfg, bool with_seg);

/// Trains the classifier and the denoiser on the source train split.
/// Progress lines go to `log` when given.
void pretrain_classification(Lab& lab, const config::Json& cfg, std::ostream* log = nullptr);
void pretrain_segmentation(Lab& lab, const config::Json& cfg, std::ostream* log = nullptr);

Lab pretrain(const config::Json& cfg, bool with_seg, std::ostream* log = nullptr);

/// Writes one checkpoint per model plus manifest.json listing file hashes.
void save(const std::filesystem::path& dir, const Lab& lab, const config::Json& cfg);

/// Rebuilds the world from `cfg` and loads checkpoints, refusing any whose
/// manifest disagrees with the configured architecture.
Lab load(const std::filesystem::path& dir, const config::Json& cfg, bool with_seg);

/// Checkpoint file name -> content hash, as recorded by save.
config::Json checkpoint_hashes(const std::filesystem::path& dir);

}  // namespace dusa::lab
