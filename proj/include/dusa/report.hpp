#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dusa/protocol.hpp"

namespace dusa::harness {

/// Segment aggregates rebuilt from CSV rows; `sizes` are the batch sizes of
/// one segment in stream order.
std::vector<SegmentAggregate> recompute(const std::vector<CsvRow>& rows, const std::vector<Index>& sizes);

struct TableRow {
  std::string method;
  std::string protocol;
  std::vector<double> acc;  // aligned with Table::columns, averaged over runs
  double avg = 0.0;         // mean over columns
  int runs = 0;
};

struct Table {
  std::vector<std::string> columns;  // corruption labels in first-seen order
  std::vector<TableRow> rows;
};

/// Corruption-by-method table from every run (CSV plus manifest) in `dir`.
Table build_table(const std::filesystem::path& dir);
void write_table(const std::filesystem::path& path, const Table& t);

struct CurvePoint {
  std::string axis;
  int value = 0;
  std::string method;
  std::string protocol;
  double acc = 0.0;
  int runs = 0;
};

/// Mean accuracy per (axis, value, method, protocol) over every sweep_*.csv in `dir`.
std::vector<CurvePoint> build_curves(const std::filesystem::path& dir);

/// Writes table.csv and one curve_<axis>.csv per swept axis into `dir`;
/// returns the files written.
std::vector<std::filesystem::path> report(const std::filesystem::path& dir);

}  // namespace dusa::harness
