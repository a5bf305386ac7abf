#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dusa/lab.hpp"

namespace dusa::harness {

enum class Method { source_only, entropy, diffusion_tta, dusa, dusa_u };
enum class Protocol { fully, continual };

std::string to_string(Method m);
std::string to_string(Protocol p);
Method parse_method(const std::string& name);
Protocol parse_protocol(const std::string& name);

struct StreamSpec {
  std::vector<corruption::Spec> corruptions;
  Index batch = 64;
  Index samples = 1024;  // per corruption
  std::uint64_t seed = 0;
};

/// Stream of the configured task: stream.* for classification, seg.batch and
/// seg.samples for segmentation.
StreamSpec stream_spec(const config::Json& cfg);

/// Samples of corruption `index` of the stream, already corrupted.
gmm::LabeledSamples stream_segment(const StreamSpec& spec, std::size_t index, const lab::Lab& lab);
world::SegSamples stream_segment_seg(const StreamSpec& spec, std::size_t index, const lab::Lab& lab);

/// Batch sizes of one corruption segment.
std::vector<Index> batch_sizes(const StreamSpec& spec);

struct BatchRow {
  std::string corruption;  // kind
  int severity = 0;
  int batch = 0;
  Index samples = 0;
  double acc = 0.0;  // accuracy, or mIoU for segmentation
  double loss = 0.0;
  long fwd = 0;
  long bwd = 0;
  double ms = 0.0;
};

struct SegmentAggregate {
  std::string label;  // kind:severity
  double acc = 0.0;   // sample-weighted mean of its batch values
  Index samples = 0;
};

struct RunRecord {
  std::string run_id;
  std::string task;
  Method method = Method::source_only;
  Protocol protocol = Protocol::fully;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<BatchRow> rows;
  std::vector<SegmentAggregate> segments;
  double overall = 0.0;

  // Filled only when RunOptions::keep_posteriors is set (classification).
  std::vector<IndexMat> candidates;
  std::vector<Mat> posteriors;
  std::vector<Mat> logits;
};

struct RunOptions {
  bool keep_posteriors = false;
};

/// Evaluate-then-adapt over the stream. The fully protocol restores the
/// pretrained models and optimizer before each corruption.
RunRecord run_protocol(Method method, Protocol protocol, const StreamSpec& stream, const lab::Lab& lab,
                       const config::Json& cfg, const RunOptions& opts = {});

/// Method, protocol and seed taken from the config.
RunRecord run(const lab::Lab& lab, const config::Json& cfg, const RunOptions& opts = {});

void aggregate(RunRecord& r);

std::string csv_header();
std::string to_csv(const RunRecord& r, bool timing);
void write_csv(const std::filesystem::path& path, const RunRecord& r, bool timing);

struct CsvRow {
  std::string run_id, method, protocol, corruption;
  int severity = 0;
  int batch = 0;
  double acc = 0.0, loss = 0.0;
  long fwd = 0, bwd = 0;
  double ms = 0.0;
};
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

config::Json manifest(const RunRecord& r, const config::Json& cfg, const config::Json& checkpoint_hashes);

/// Writes <out>/<run_id>.csv and <out>/<run_id>.json.
void persist(const std::filesystem::path& out, const RunRecord& r, const config::Json& cfg,
             const config::Json& checkpoint_hashes);

enum class Axis { timestep, budget, batch_size };
std::string to_string(Axis a);
Axis parse_axis(const std::string& name);

/// Config with one sweep value applied. Budget b splits as k = max(1, round(2b/3)), m = b - k.
config::Json with_axis(const config::Json& cfg, Axis axis, int value);

struct SweepPoint {
  int value = 0;
  RunRecord record;
};

std::vector<SweepPoint> sweep(Axis axis, const std::vector<int>& values, const lab::Lab& lab, const config::Json& cfg);

/// axis,value,run_id,method,protocol,acc
void write_sweep_summary(const std::filesystem::path& path, Axis axis, const std::vector<SweepPoint>& points);

}  // namespace dusa::harness
