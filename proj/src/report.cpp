#include "dusa/report.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dusa/checkpoint.hpp"

namespace dusa::harness {

std::vector<SegmentAggregate> recompute(const std::vector<CsvRow>& rows, const std::vector<Index>& sizes) {
  std::vector<SegmentAggregate> out;
  for (const CsvRow& row : rows) {
    const std::string label = row.corruption + ":" + std::to_string(row.severity);
    if (out.empty() || out.back().label != label || row.batch == 0) out.push_back({label, 0.0, 0});
    if (row.batch < 0 || static_cast<std::size_t>(row.batch) >= sizes.size())
      throw std::runtime_error("batch index outside the stream layout");
    const Index n = sizes[static_cast<std::size_t>(row.batch)];
    out.back().acc += row.acc * static_cast<double>(n);
    out.back().samples += n;
  }
  for (auto& s : out) s.acc /= static_cast<double>(s.samples);
  return out;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir, const std::string& prefix,
                                                const std::string& ext) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ext && name.rfind(prefix, 0) == 0) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

Table build_table(const std::filesystem::path& dir) {
  struct Acc {
    std::map<std::string, std::pair<double, int>> by_label;
    int runs = 0;
  };
  Table t;
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& json_path : sorted_files(dir, "", ".json")) {
    const config::Json m = io::read_json(json_path);
    if (!m.is_object() || !m.contains("run_id") || !m.contains("stream")) continue;
    const auto csv_path = dir / (m.at("run_id").get<std::string>() + ".csv");
    if (!std::filesystem::exists(csv_path)) continue;
    StreamSpec layout;
    layout.batch = m.at("stream").at("batch");
    layout.samples = m.at("stream").at("samples");
    const auto segs = recompute(read_csv(csv_path), batch_sizes(layout));
    const auto key = std::make_pair(m.at("method").get<std::string>(), m.at("protocol").get<std::string>());
    if (!groups.count(key)) order.push_back(key);
    Acc& g = groups[key];
    ++g.runs;
    std::map<std::string, std::pair<double, Index>> per_label;  // repeated labels pool their samples
    for (const auto& s : segs) {
      if (std::find(t.columns.begin(), t.columns.end(), s.label) == t.columns.end()) t.columns.push_back(s.label);
      per_label[s.label].first += s.acc * static_cast<double>(s.samples);
      per_label[s.label].second += s.samples;
    }
    for (const auto& [label, v] : per_label) {
      g.by_label[label].first += v.first / static_cast<double>(v.second);
      g.by_label[label].second += 1;
    }
  }
  if (order.empty()) throw std::runtime_error("no run records found in " + dir.string());
  for (const auto& key : order) {
    const Acc& g = groups.at(key);
    TableRow row{key.first, key.second, {}, 0.0, g.runs};
    for (const auto& label : t.columns) {
      const auto it = g.by_label.find(label);
      row.acc.push_back(it == g.by_label.end() ? std::nan("") : it->second.first / it->second.second);
    }
    double total = 0.0;
    int n = 0;
    for (double a : row.acc)
      if (!std::isnan(a)) total += a, ++n;
    row.avg = n ? total / n : std::nan("");
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_table(const std::filesystem::path& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,protocol";
  for (const auto& c : t.columns) out << ',' << c;
  out << ",Avg,runs\n";
  for (const auto& r : t.rows) {
    out << r.method << ',' << r.protocol;
    for (double a : r.acc) out << ',' << (std::isnan(a) ? std::string() : num(a));
    out << ',' << num(r.avg) << ',' << r.runs << "\n";
  }
}

std::vector<CurvePoint> build_curves(const std::filesystem::path& dir) {
  std::vector<CurvePoint> points;
  for (const auto& path : sorted_files(dir, "sweep_", ".csv")) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    if (line != "axis,value,run_id,method,protocol,acc") continue;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(cell);
      if (f.size() != 6) throw std::runtime_error("malformed row in " + path.string());
      const int value = std::stoi(f[1]);
      auto it = std::find_if(points.begin(), points.end(), [&](const CurvePoint& p) {
        return p.axis == f[0] && p.value == value && p.method == f[3] && p.protocol == f[4];
      });
      if (it == points.end()) {
        points.push_back({f[0], value, f[3], f[4], 0.0, 0});
        it = points.end() - 1;
      }
      it->acc += std::stod(f[5]);
      ++it->runs;
    }
  }
  for (auto& p : points) p.acc /= p.runs;
  std::stable_sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return std::tie(a.axis, a.method, a.protocol, a.value) < std::tie(b.axis, b.method, b.protocol, b.value);
  });
  return points;
}

std::vector<std::filesystem::path> report(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  bool any_run = false;
  for (const auto& p : sorted_files(dir, "", ".json")) {
    const config::Json m = io::read_json(p);
    if (m.is_object() && m.contains("run_id")) any_run = true;
  }
  if (any_run) {
    write_table(dir / "table.csv", build_table(dir));
    written.push_back(dir / "table.csv");
  }
  const auto curves = build_curves(dir);
  std::map<std::string, std::vector<CurvePoint>> by_axis;
  for (const auto& p : curves) by_axis[p.axis].push_back(p);
  for (const auto& [axis, pts] : by_axis) {
    const auto path = dir / ("curve_" + axis + ".csv");
    std::ofstream out(path, std::ios::binary);
    out << "value,method,protocol,acc,runs\n";
    for (const auto& p : pts) out << p.value << ',' << p.method << ',' << p.protocol << ',' << num(p.acc) << ',' << p.runs << "\n";
    written.push_back(path);
  }
  if (written.empty()) throw std::runtime_error("no run records or sweep summaries in " + dir.string());
  return written;
}

}  // namespace dusa::harness
