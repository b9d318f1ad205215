#include "pvcmc/dataio.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace pvcmc {

namespace {

using nlohmann::json;

double parse_cell(const std::string& cell, const std::filesystem::path& file, Index row) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r')) --end;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw InvalidArgument("non-numeric cell '" + cell + "' in " + file.string() + " at row " +
                          std::to_string(row));
  return value;
}

Mat load_csv_matrix(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidArgument("cannot open view file " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  Index row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(parse_cell(cell, file, row_index));
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidArgument("ragged row in " + file.string() + " at row " +
                            std::to_string(row_index));
    rows.push_back(std::move(row));
    ++row_index;
  }
  if (rows.empty()) throw InvalidArgument("empty view file " + file.string());
  Mat m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

IVec load_label_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidArgument("cannot open label file " + file.string());
  std::vector<int> labels;
  std::string line;
  Index row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int value = 0;
    const char* begin = line.data();
    const char* end = begin + line.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc())
      throw InvalidArgument("non-integer label in " + file.string() + " at row " +
                            std::to_string(row_index));
    labels.push_back(value);
    ++row_index;
  }
  if (labels.empty()) throw InvalidArgument("empty label file " + file.string());
  IVec v(static_cast<Index>(labels.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = labels[static_cast<std::size_t>(i)];
  return v;
}

NormalizeMethod parse_normalize(const std::string& name) {
  if (name == "minmax") return NormalizeMethod::kMinMax;
  if (name == "zscore") return NormalizeMethod::kZScore;
  if (name == "none") return NormalizeMethod::kNone;
  throw InvalidArgument("manifest: unknown normalize method '" + name + "'");
}

void write_csv_matrix(const Mat& m, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ComputeError("cannot write " + file.string());
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf;
      if (j + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
}

}  // namespace

MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InvalidArgument("cannot open manifest " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw InvalidArgument("manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("views") || !manifest["views"].is_array() || manifest["views"].empty())
    throw InvalidArgument("manifest: 'views' must be a non-empty array of paths");

  const auto base = manifest_path.parent_path();
  const auto resolve = [&base](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  const NormalizeMethod method =
      parse_normalize(manifest.value("normalize", std::string("minmax")));

  MultiViewDataset dataset;
  int view_id = 0;
  for (const auto& entry : manifest["views"]) {
    const std::filesystem::path file = resolve(entry.get<std::string>());
    ViewMatrix view;
    view.view_id = view_id++;
    view.values = load_csv_matrix(file);
    if (!dataset.views.empty() && view.values.rows() != dataset.n_samples())
      throw InvalidArgument("row-count mismatch: " + file.string() + " has " +
                            std::to_string(view.values.rows()) + " rows, expected " +
                            std::to_string(dataset.n_samples()));
    dataset.views.push_back(normalize(view, method));
  }

  if (manifest.contains("labels") && !manifest["labels"].is_null()) {
    const std::filesystem::path file = resolve(manifest["labels"].get<std::string>());
    IVec labels = load_label_file(file);
    if (labels.size() != dataset.n_samples())
      throw InvalidArgument("label row-count mismatch in " + file.string());
    for (Index i = 0; i < labels.size(); ++i)
      if (labels[i] < 0)
        throw InvalidArgument("label out of range in " + file.string() + " at row " +
                              std::to_string(i));
    dataset.labels = std::move(labels);
  }

  validate(dataset);
  return dataset;
}

std::filesystem::path save_dataset(const MultiViewDataset& dataset,
                                   const std::filesystem::path& directory,
                                   const std::string& stem) {
  std::filesystem::create_directories(directory);
  json manifest;
  manifest["normalize"] = "none";
  manifest["views"] = json::array();
  for (const auto& view : dataset.views) {
    const std::string name = stem + "_view" + std::to_string(view.view_id) + ".csv";
    write_csv_matrix(view.values, directory / name);
    manifest["views"].push_back(name);
  }
  if (dataset.labels) {
    const std::string name = stem + "_labels.csv";
    std::ofstream out(directory / name);
    if (!out) throw ComputeError("cannot write " + (directory / name).string());
    for (Index i = 0; i < dataset.labels->size(); ++i) out << (*dataset.labels)[i] << '\n';
    manifest["labels"] = name;
  } else {
    manifest["labels"] = nullptr;
  }
  const std::filesystem::path manifest_path = directory / (stem + "_manifest.json");
  std::ofstream out(manifest_path);
  if (!out) throw ComputeError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

}  // namespace pvcmc
