#include "temp/harness/features.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "temp/harness/records.hpp"

namespace temp::harness {

void dump_features(const model::Extractor& extractor, const std::vector<FeatureSet>& sets, const std::string& path) {
  const std::size_t d = extractor.config().feature_dim;
  std::ostringstream out;
  for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
  out << "identity,role,phase\n";
  for (const FeatureSet& set : sets) {
    if (set.role != "query" && set.role != "gallery") throw std::invalid_argument("role must be query or gallery");
    if (set.inputs.dim(0) != set.labels.size()) throw std::invalid_argument("feature set labels do not match inputs");
    diff::Tensor f = model::extract_features(extractor, set.inputs);
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) out << format_number(f.values()[i * d + j]) << ',';
      out << set.labels[i] << ',' << set.role << ',' << set.phase << "\n";
    }
  }
  write_file_atomic(path, out.str());
}

std::vector<FeatureRow> read_feature_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + " is empty");
  std::size_t columns = 1;
  for (char c : line) columns += c == ',' ? 1 : 0;
  if (columns < 4) throw std::runtime_error(path + ": bad header");
  const std::size_t d = columns - 3;
  std::vector<FeatureRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    FeatureRow r;
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::getline(cells, cell, ',')) throw std::runtime_error(path + ": short row");
      r.features.push_back(std::stof(cell));
    }
    std::getline(cells, cell, ',');
    r.identity = std::stoi(cell);
    std::getline(cells, r.role, ',');
    std::getline(cells, cell, ',');
    r.phase = std::stoul(cell);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace temp::harness
