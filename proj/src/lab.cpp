#include "dusa/lab.hpp"

#include <ostream>

#include "dusa/checkpoint.hpp"

namespace dusa::lab {

using config::at;

world::WorldConfig world_config(const config::Json& cfg) {
  world::WorldConfig w;
  w.classes = at(cfg, "world.classes");
  w.dim = at(cfg, "world.dim");
  w.train = at(cfg, "world.train");
  w.test = at(cfg, "world.test");
  w.mixture.radius = at(cfg, "world.radius");
  w.mixture.cov_scale = at(cfg, "world.cov_scale");
  w.mixture.cov_floor = at(cfg, "world.cov_floor");
  w.seed = at(cfg, "world.seed");
  return w;
}

world::SegWorldConfig seg_world_config(const config::Json& cfg) {
  world::SegWorldConfig w;
  w.height = at(cfg, "seg.height");
  w.width = at(cfg, "seg.width");
  w.channels = at(cfg, "seg.channels");
  w.classes = at(cfg, "seg.classes");
  w.min_sites = at(cfg, "seg.min_sites");
  w.max_sites = at(cfg, "seg.max_sites");
  w.radius = at(cfg, "seg.radius");
  w.pixel_std = at(cfg, "seg.pixel_std");
  w.anisotropy = at(cfg, "seg.anisotropy");
  w.train = at(cfg, "seg.train");
  w.test = at(cfg, "seg.test");
  w.seed = splitmix64(at(cfg, "world.seed").get<std::uint64_t>() ^ 0x5e6d0a11ULL);
  return w;
}

diffusion::NoiseSchedule schedule(const config::Json& cfg) {
  return diffusion::linear_schedule(at(cfg, "schedule.steps"), at(cfg, "schedule.beta_first"),
                                    at(cfg, "schedule.beta_last"));
}

task::ClassifierConfig classifier_config(const config::Json& cfg) {
  return {at(cfg, "world.dim"), at(cfg, "world.classes"), at(cfg, "classifier.hidden").get<std::vector<int>>()};
}

diffusion::DenoiserConfig denoiser_config(const config::Json& cfg) {
  diffusion::DenoiserConfig d;
  d.dim = at(cfg, "world.dim");
  d.classes = at(cfg, "world.classes");
  d.time_dim = at(cfg, "denoiser.time_dim");
  d.class_dim = at(cfg, "denoiser.class_dim");
  d.hidden = at(cfg, "denoiser.hidden").get<std::vector<int>>();
  d.kind = diffusion::parse_prediction_kind(at(cfg, "denoiser.kind"));
  return d;
}

task::LabelerConfig labeler_config(const config::Json& cfg) {
  task::LabelerConfig l;
  l.height = at(cfg, "seg.height");
  l.width = at(cfg, "seg.width");
  l.channels = at(cfg, "seg.channels");
  l.classes = at(cfg, "seg.classes");
  l.pos_dim = at(cfg, "seg.pos_dim");
  l.hidden = at(cfg, "seg.labeler.hidden").get<std::vector<int>>();
  return l;
}

diffusion::DenoiserConfig seg_denoiser_config(const config::Json& cfg) {
  diffusion::DenoiserConfig d;
  d.dim = at(cfg, "seg.height").get<int>() * at(cfg, "seg.width").get<int>() * at(cfg, "seg.channels").get<int>();
  d.classes = at(cfg, "seg.classes");
  d.time_dim = at(cfg, "seg.denoiser.time_dim");
  d.class_dim = at(cfg, "seg.denoiser.class_dim");
  d.hidden = at(cfg, "seg.denoiser.hidden").get<std::vector<int>>();
  d.kind = diffusion::PredictionKind::epsilon;
  return d;
}

Lab build(const config::Json& cfg, bool with_seg) {
  const world::WorldConfig wc = world_config(cfg);
  Lab lab{world::make_world(wc), {}, schedule(cfg), {}, {}, std::nullopt};
  lab.corruption = corruption::make_params(world::data_mean(lab.world.mixture), splitmix64(wc.seed ^ 0xc0a1ULL));
  if (with_seg) {
    const world::SegWorldConfig sc = seg_world_config(cfg);
    SegLab seg;
    seg.world = world::make_seg_world(sc);
    Rng rng(splitmix64(sc.seed));
    Rng train_rng = rng.split(), test_rng = rng.split();
    seg.train = world::sample_images(seg.world, sc.train, train_rng);
    seg.test = world::sample_images(seg.world, sc.test, test_rng);
    seg.corruption = corruption::make_params(world::pixel_mean(seg.world), splitmix64(sc.seed ^ 0xc0a1ULL));
    lab.seg = std::move(seg);
  }
  return lab;
}

void pretrain_classification(Lab& lab, const config::Json& cfg, std::ostream* log) {
  Rng rng(splitmix64(at(cfg, "world.seed").get<std::uint64_t>() ^ 0x9e7a1eULL));
  Rng clf_rng = rng.split(), dn_rng = rng.split();
  const task::FitConfig fit{at(cfg, "classifier.epochs"), at(cfg, "classifier.batch"), at(cfg, "classifier.lr")};
  lab.classifier = task::train_classifier(lab.world.train.x, lab.world.train.y, classifier_config(cfg), fit, clf_rng,
                                          &lab.world.test.x, &lab.world.test.y);
  if (log) *log << "classifier: source test accuracy " << lab.classifier.source_accuracy << "\n";
  const diffusion::TrainConfig train{at(cfg, "denoiser.epochs"), at(cfg, "denoiser.batch"), at(cfg, "denoiser.lr"),
                                     at(cfg, "denoiser.p_null")};
  std::vector<double> trace;
  lab.denoiser = diffusion::train_denoiser(lab.world.train.x, lab.world.train.y, lab.schedule, denoiser_config(cfg),
                                           train, dn_rng, &trace);
  if (log && !trace.empty()) *log << "denoiser: final epoch loss " << trace.back() << "\n";
}

void pretrain_segmentation(Lab& lab, const config::Json& cfg, std::ostream* log) {
  if (!lab.seg) throw std::logic_error("pretrain_segmentation: lab has no segmentation world");
  SegLab& seg = *lab.seg;
  Rng rng(splitmix64(seg.world.config.seed ^ 0x9e7a1eULL));
  Rng dl_rng = rng.split(), dn_rng = rng.split();
  const task::FitConfig fit{at(cfg, "seg.labeler.epochs"), at(cfg, "seg.labeler.batch"), at(cfg, "seg.labeler.lr")};
  seg.labeler = task::train_dense_labeler(seg.train.images, seg.train.pixel_labels, labeler_config(cfg), fit, dl_rng);
  if (log) {
    const auto pred = task::predict_rows(task::dense_classify(seg.labeler, seg.test.images));
    *log << "dense labeler: source test mIoU "
         << task::mean_iou(pred, seg.test.pixel_labels, seg.world.config.classes) << "\n";
  }
  const std::vector<int> cond = world::present_class_conditions(seg.train, seg.world.config, dn_rng);
  const diffusion::TrainConfig train{at(cfg, "seg.denoiser.epochs"), at(cfg, "seg.denoiser.batch"),
                                     at(cfg, "seg.denoiser.lr"), at(cfg, "seg.denoiser.p_null")};
  std::vector<double> trace;
  seg.denoiser =
      diffusion::train_denoiser(seg.train.images, cond, lab.schedule, seg_denoiser_config(cfg), train, dn_rng, &trace);
  if (log && !trace.empty()) *log << "grid denoiser: final epoch loss " << trace.back() << "\n";
}

Lab pretrain(const config::Json& cfg, bool with_seg, std::ostream* log) {
  Lab lab = build(cfg, with_seg);
  pretrain_classification(lab, cfg, log);
  if (with_seg) pretrain_segmentation(lab, cfg, log);
  return lab;
}

namespace {

const char* kClassifierFile = "classifier.json";
const char* kDenoiserFile = "denoiser.json";
const char* kLabelerFile = "labeler.json";
const char* kGridDenoiserFile = "grid_denoiser.json";
const char* kWorldFile = "world.json";

}  // namespace

void save(const std::filesystem::path& dir, const Lab& lab, const config::Json& cfg) {
  std::filesystem::create_directories(dir);
  io::write_json(dir / kWorldFile, gmm::to_json(lab.world.mixture));
  io::save(dir / kClassifierFile, io::to_checkpoint(lab.classifier));
  io::save(dir / kDenoiserFile, io::to_checkpoint(lab.denoiser, lab.schedule));
  std::vector<std::string> files{kWorldFile, kClassifierFile, kDenoiserFile};
  if (lab.seg) {
    io::save(dir / kLabelerFile, io::to_checkpoint(lab.seg->labeler));
    io::save(dir / kGridDenoiserFile, io::to_checkpoint(lab.seg->denoiser, lab.schedule));
    files.push_back(kLabelerFile);
    files.push_back(kGridDenoiserFile);
  }
  config::Json hashes = config::Json::object();
  for (const auto& f : files) hashes[f] = io::file_hash(dir / f);
  io::write_json(dir / "manifest.json",
                 {{"config", cfg}, {"config_hash", config::hash(cfg)}, {"files", hashes},
                  {"source_accuracy", lab.classifier.source_accuracy}});
}

Lab load(const std::filesystem::path& dir, const config::Json& cfg, bool with_seg) {
  Lab lab = build(cfg, with_seg);
  const config::Json stored_world = io::read_json(dir / kWorldFile);
  if (stored_world != gmm::to_json(lab.world.mixture))
    throw io::CheckpointMismatch("world checkpoint does not match the configured world seed and dimensions");

  io::Checkpoint clf = io::load(dir / kClassifierFile);
  io::require_manifest(clf.manifest,
                       {{"model", "classifier"},
                        {"dim", at(cfg, "world.dim")},
                        {"classes", at(cfg, "world.classes")},
                        {"hidden", at(cfg, "classifier.hidden")}},
                       "classifier");
  lab.classifier = io::classifier_from(clf);

  io::Checkpoint dn = io::load(dir / kDenoiserFile);
  diffusion::Denoiser probe;
  probe.config = denoiser_config(cfg);
  io::require_manifest(dn.manifest, io::manifest_of(probe, lab.schedule), "denoiser");
  lab.denoiser = io::denoiser_from(dn);

  if (with_seg) {
    io::Checkpoint dl = io::load(dir / kLabelerFile);
    task::DenseLabeler dl_probe;
    dl_probe.config = labeler_config(cfg);
    io::require_manifest(dl.manifest, io::manifest_of(dl_probe), "dense labeler");
    lab.seg->labeler = io::labeler_from(dl);

    io::Checkpoint gd = io::load(dir / kGridDenoiserFile);
    diffusion::Denoiser gd_probe;
    gd_probe.config = seg_denoiser_config(cfg);
    io::require_manifest(gd.manifest, io::manifest_of(gd_probe, lab.schedule), "grid denoiser");
    lab.seg->denoiser = io::denoiser_from(gd);
  }
  return lab;
}

config::Json checkpoint_hashes(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) return config::Json::object();
  return io::read_json(path).value("files", config::Json::object());
}

}  // namespace dusa::lab
