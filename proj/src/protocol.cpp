#include "dusa/protocol.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dusa/baselines.hpp"
#include "dusa/checkpoint.hpp"

#ifndef DUSA_VERSION
#define DUSA_VERSION "dev"
#endif

namespace dusa::harness {

using config::at;

std::string to_string(Method m) {
  switch (m) {
    case Method::source_only: return "source_only";
    case Method::entropy: return "entropy";
    case Method::diffusion_tta: return "diffusion_tta";
    case Method::dusa: return "dusa";
    case Method::dusa_u: return "dusa_u";
  }
  return "?";
}

std::string to_string(Protocol p) { return p == Protocol::fully ? "fully" : "continual"; }

Method parse_method(const std::string& name) {
  for (Method m : {Method::source_only, Method::entropy, Method::diffusion_tta, Method::dusa, Method::dusa_u})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown method '" + name + "'");
}

Protocol parse_protocol(const std::string& name) {
  if (name == "fully") return Protocol::fully;
  if (name == "continual") return Protocol::continual;
  throw std::invalid_argument("unknown protocol '" + name + "'");
}

StreamSpec stream_spec(const config::Json& cfg) {
  StreamSpec s;
  for (const auto& c : at(cfg, "stream.corruptions")) s.corruptions.push_back(corruption::parse_spec(c));
  const bool seg = at(cfg, "task").get<std::string>() == "segment";
  s.batch = at(cfg, seg ? "seg.batch" : "stream.batch");
  s.samples = at(cfg, seg ? "seg.samples" : "stream.samples");
  s.seed = at(cfg, "seed");
  if (s.corruptions.empty()) throw std::invalid_argument("stream needs at least one corruption");
  if (s.batch < 1 || s.samples < 1) throw std::invalid_argument("stream batch and samples must be positive");
  return s;
}

namespace {

Rng segment_rng(const StreamSpec& spec, std::size_t index) {
  return Rng(splitmix64(spec.seed ^ splitmix64(0x57ea0000ULL + index)));
}

}  // namespace

gmm::LabeledSamples stream_segment(const StreamSpec& spec, std::size_t index, const lab::Lab& lab) {
  Rng rng = segment_rng(spec, index);
  Rng data_rng = rng.split(), noise_rng = rng.split();
  gmm::LabeledSamples s = gmm::sample(lab.world.mixture, spec.samples, data_rng);
  const corruption::Spec& c = spec.corruptions.at(index);
  s.x = corruption::corrupt(s.x, c.kind, c.severity, lab.corruption, noise_rng);
  return s;
}

world::SegSamples stream_segment_seg(const StreamSpec& spec, std::size_t index, const lab::Lab& lab) {
  if (!lab.seg) throw std::logic_error("segmentation stream needs a segmentation world");
  Rng rng = segment_rng(spec, index);
  Rng data_rng = rng.split(), noise_rng = rng.split();
  world::SegSamples s = world::sample_images(lab.seg->world, spec.samples, data_rng);
  const corruption::Spec& c = spec.corruptions.at(index);
  s.images = corruption::corrupt_pixels(s.images, lab.seg->world.config.channels, c.kind, c.severity,
                                        lab.seg->corruption, noise_rng);
  return s;
}

std::vector<Index> batch_sizes(const StreamSpec& spec) {
  std::vector<Index> sizes;
  for (Index start = 0; start < spec.samples; start += spec.batch)
    sizes.push_back(std::min(spec.batch, spec.samples - start));
  return sizes;
}

namespace {

Adam make_optimizer(const config::Json& cfg) {
  Adam opt(AdamConfig{at(cfg, "adapt.lr"), at(cfg, "adapt.beta1"), at(cfg, "adapt.beta2"), at(cfg, "adapt.eps")});
  opt.set_lr(diffusion::kDenoiserPrefix, at(cfg, "adapt.denoiser_lr"));
  return opt;
}

csm::ExtraLaw parse_law(const std::string& name) {
  if (name == "softmax") return csm::ExtraLaw::softmax;
  if (name == "uniform") return csm::ExtraLaw::uniform;
  throw std::invalid_argument("unknown csm.law '" + name + "'");
}

Mode mode_for(Method method, const config::Json& cfg) {
  return method == Method::dusa_u ? Mode::dusa_u : parse_mode(at(cfg, "dusa.mode"));
}

AdaptConfig adapt_config(Method method, const config::Json& cfg) {
  AdaptConfig a;
  a.t = at(cfg, "dusa.t");
  a.budget = {at(cfg, "csm.k"), at(cfg, "csm.m"), parse_law(at(cfg, "csm.law")), at(cfg, "csm.temperature")};
  a.mode = mode_for(method, cfg);
  a.kind = diffusion::parse_prediction_kind(at(cfg, "dusa.kind"));
  a.accumulate = at(cfg, "adapt.accumulate");
  return a;
}

std::string run_id(const RunRecord& r) {
  return to_string(r.method) + "-" + to_string(r.protocol) + "-s" + std::to_string(r.seed) + "-" +
         r.config_hash.substr(0, 8);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

void run_classification(RunRecord& rec, Method method, Protocol protocol, const StreamSpec& stream,
                        const lab::Lab& lab, const config::Json& cfg, const RunOptions& opts) {
  task::Classifier clf = lab.classifier;
  diffusion::Denoiser dn = lab.denoiser;
  Adam opt = make_optimizer(cfg);
  Rng rng(splitmix64(stream.seed ^ 0xada97ULL));
  const AdaptConfig acfg = adapt_config(method, cfg);
  const int n_timesteps = at(cfg, "diffusion_tta.timesteps");

  for (std::size_t j = 0; j < stream.corruptions.size(); ++j) {
    if (protocol == Protocol::fully) {
      clf = lab.classifier;
      dn = lab.denoiser;
      opt.reset();
    }
    const corruption::Spec& spec = stream.corruptions[j];
    const gmm::LabeledSamples data = stream_segment(stream, j, lab);
    Index start = 0;
    int b = 0;
    for (Index size : batch_sizes(stream)) {
      const Mat x = data.x.middleRows(start, size);
      const std::vector<int> y(data.y.begin() + start, data.y.begin() + start + size);
      start += size;
      if (opts.keep_posteriors) rec.logits.push_back(task::classify(clf, x));
      const auto t0 = std::chrono::steady_clock::now();
      AdaptStepReport rep;
      switch (method) {
        case Method::source_only: rep = baselines::source_only_step(x, clf); break;
        case Method::entropy: rep = baselines::entropy_step(x, clf, opt); break;
        case Method::diffusion_tta: rep = baselines::diffusion_tta_step(x, clf, dn, lab.schedule, n_timesteps, opt, rng); break;
        case Method::dusa:
        case Method::dusa_u: rep = adapt_step(x, clf, dn, lab.schedule, acfg, opt, rng); break;
      }
      const double ms = elapsed_ms(t0);
      if (opts.keep_posteriors) {
        rec.candidates.push_back(rep.candidates);
        rec.posteriors.push_back(rep.candidate_probs);
      }
      rec.rows.push_back({corruption::to_string(spec.kind), spec.severity, b++, size, task::accuracy(rep.predictions, y),
                          rep.loss, rep.denoiser_forwards, rep.denoiser_backwards, ms});
    }
  }
}

void run_segmentation(RunRecord& rec, Method method, Protocol protocol, const StreamSpec& stream,
                      const lab::Lab& lab, const config::Json& cfg) {
  if (!lab.seg) throw std::logic_error("segmentation run needs a segmentation lab");
  if (method == Method::diffusion_tta) throw std::invalid_argument("diffusion_tta is not defined for segmentation");
  task::DenseLabeler dl = lab.seg->labeler;
  diffusion::Denoiser dn = lab.seg->denoiser;
  Adam opt = make_optimizer(cfg);
  Rng rng(splitmix64(stream.seed ^ 0xada97ULL));
  const SegAdaptConfig scfg{at(cfg, "dusa.t"), at(cfg, "seg.budget"), mode_for(method, cfg)};
  const int classes = lab.seg->world.config.classes;
  const Index pixels = lab.seg->world.config.pixels();

  for (std::size_t j = 0; j < stream.corruptions.size(); ++j) {
    if (protocol == Protocol::fully) {
      dl = lab.seg->labeler;
      dn = lab.seg->denoiser;
      opt.reset();
    }
    const corruption::Spec& spec = stream.corruptions[j];
    const world::SegSamples data = stream_segment_seg(stream, j, lab);
    Index start = 0;
    int b = 0;
    for (Index size : batch_sizes(stream)) {
      const Mat x = data.images.middleRows(start, size);
      const std::vector<int> y(data.pixel_labels.begin() + start * pixels,
                               data.pixel_labels.begin() + (start + size) * pixels);
      start += size;
      const auto t0 = std::chrono::steady_clock::now();
      AdaptStepReport rep;
      switch (method) {
        case Method::source_only: rep = baselines::source_only_step(x, dl); break;
        case Method::entropy: rep = baselines::entropy_step(x, dl, opt); break;
        default: rep = adapt_step_seg(x, dl, dn, lab.schedule, scfg, opt, rng); break;
      }
      const double ms = elapsed_ms(t0);
      rec.rows.push_back({corruption::to_string(spec.kind), spec.severity, b++, size,
                          task::mean_iou(rep.predictions, y, classes), rep.loss, rep.denoiser_forwards,
                          rep.denoiser_backwards, ms});
    }
  }
}

}  // namespace

void aggregate(RunRecord& r) {
  r.segments.clear();
  double total = 0.0;
  Index count = 0;
  for (const BatchRow& row : r.rows) {
    const std::string label = row.corruption + ":" + std::to_string(row.severity);
    if (r.segments.empty() || r.segments.back().label != label || row.batch == 0) r.segments.push_back({label, 0.0, 0});
    SegmentAggregate& seg = r.segments.back();
    seg.acc += row.acc * static_cast<double>(row.samples);
    seg.samples += row.samples;
    total += row.acc * static_cast<double>(row.samples);
    count += row.samples;
  }
  for (SegmentAggregate& seg : r.segments) seg.acc /= static_cast<double>(seg.samples);
  r.overall = count ? total / static_cast<double>(count) : 0.0;
}

RunRecord run_protocol(Method method, Protocol protocol, const StreamSpec& stream, const lab::Lab& lab,
                       const config::Json& cfg, const RunOptions& opts) {
  RunRecord rec;
  rec.task = at(cfg, "task");
  rec.method = method;
  rec.protocol = protocol;
  rec.seed = stream.seed;
  config::Json effective = cfg;
  effective["method"] = to_string(method);
  effective["protocol"] = to_string(protocol);
  effective["seed"] = stream.seed;
  effective.erase("out");
  rec.config_hash = config::hash(effective);
  rec.run_id = run_id(rec);
  if (rec.task == "classify")
    run_classification(rec, method, protocol, stream, lab, cfg, opts);
  else if (rec.task == "segment")
    run_segmentation(rec, method, protocol, stream, lab, cfg);
  else
    throw std::invalid_argument("unknown task '" + rec.task + "'");
  aggregate(rec);
  return rec;
}

RunRecord run(const lab::Lab& lab, const config::Json& cfg, const RunOptions& opts) {
  return run_protocol(parse_method(at(cfg, "method")), parse_protocol(at(cfg, "protocol")), stream_spec(cfg), lab, cfg,
                      opts);
}

// -- persistence -------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string csv_header() { return "run_id,method,protocol,corruption,severity,batch,acc,loss,fwd,bwd,ms"; }

std::string to_csv(const RunRecord& r, bool timing) {
  std::ostringstream out;
  out << csv_header() << "\n";
  for (const BatchRow& row : r.rows) {
    char ms[32];
    std::snprintf(ms, sizeof(ms), "%.3f", timing ? row.ms : 0.0);
    out << r.run_id << ',' << to_string(r.method) << ',' << to_string(r.protocol) << ',' << row.corruption << ','
        << row.severity << ',' << row.batch << ',' << num(row.acc) << ',' << num(row.loss) << ',' << row.fwd << ','
        << row.bwd << ',' << ms << "\n";
  }
  return out.str();
}

void write_csv(const std::filesystem::path& path, const RunRecord& r, bool timing) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv(r, timing);
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != csv_header()) throw std::runtime_error(path.string() + " is not a run record");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw std::runtime_error("malformed row in " + path.string());
    rows.push_back({f[0], f[1], f[2], f[3], std::stoi(f[4]), std::stoi(f[5]), std::stod(f[6]), std::stod(f[7]),
                    std::stol(f[8]), std::stol(f[9]), std::stod(f[10])});
  }
  return rows;
}

config::Json manifest(const RunRecord& r, const config::Json& cfg, const config::Json& checkpoint_hashes) {
  config::Json segs = config::Json::array();
  for (const auto& s : r.segments) segs.push_back({{"corruption", s.label}, {"acc", s.acc}, {"samples", s.samples}});
  const StreamSpec stream = stream_spec(cfg);
  return {{"run_id", r.run_id},
          {"task", r.task},
          {"method", to_string(r.method)},
          {"protocol", to_string(r.protocol)},
          {"seed", r.seed},
          {"config", cfg},
          {"config_hash", r.config_hash},
          {"checkpoints", checkpoint_hashes},
          {"code_version", DUSA_VERSION},
          {"stream", {{"batch", stream.batch}, {"samples", stream.samples}}},
          {"segments", segs},
          {"overall", r.overall}};
}

void persist(const std::filesystem::path& out, const RunRecord& r, const config::Json& cfg,
             const config::Json& checkpoint_hashes) {
  write_csv(out / (r.run_id + ".csv"), r, at(cfg, "timing").get<bool>());
  io::write_json(out / (r.run_id + ".json"), manifest(r, cfg, checkpoint_hashes));
}

// -- sweeps ------------------------------------------------------------------

std::string to_string(Axis a) {
  switch (a) {
    case Axis::timestep: return "timestep";
    case Axis::budget: return "budget";
    case Axis::batch_size: return "batchSize";
  }
  return "?";
}

Axis parse_axis(const std::string& name) {
  for (Axis a : {Axis::timestep, Axis::budget, Axis::batch_size})
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown sweep axis '" + name + "'");
}

config::Json with_axis(const config::Json& cfg, Axis axis, int value) {
  config::Json out = cfg;
  const bool seg = at(cfg, "task").get<std::string>() == "segment";
  switch (axis) {
    case Axis::timestep: out["dusa"]["t"] = value; break;
    case Axis::budget:
      if (value < 1) throw std::invalid_argument("budget must be at least 1");
      if (seg) {
        out["seg"]["budget"] = value;
      } else {
        const int k = std::max(1, static_cast<int>(std::lround(2.0 * value / 3.0)));
        out["csm"]["k"] = k;
        out["csm"]["m"] = value - k;
      }
      break;
    case Axis::batch_size: out[seg ? "seg" : "stream"]["batch"] = value; break;
  }
  return out;
}

std::vector<SweepPoint> sweep(Axis axis, const std::vector<int>& values, const lab::Lab& lab, const config::Json& cfg) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  std::vector<SweepPoint> points;
  for (int v : values) points.push_back({v, run(lab, with_axis(cfg, axis, v))});
  return points;
}

void write_sweep_summary(const std::filesystem::path& path, Axis axis, const std::vector<SweepPoint>& points) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "axis,value,run_id,method,protocol,acc\n";
  for (const auto& p : points)
    out << to_string(axis) << ',' << p.value << ',' << p.record.run_id << ',' << to_string(p.record.method) << ','
        << to_string(p.record.protocol) << ',' << num(p.record.overall) << "\n";
}

}  // namespace dusa::harness
