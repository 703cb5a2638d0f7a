#include "temp/harness/records.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace temp::harness {

const char* const kMetricsHeader =
    "run_id,method,seed,phase,iteration,batch_size,cmc_top1,mean_reid_entropy,loss,param_drift_l2,"
    "wallclock_ms_per_image,strength";

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
  out << kMetricsHeader << "\n";
  for (const auto& r : records) {
    out << r.run_id << ',' << r.method << ',' << r.seed << ',' << r.phase << ',' << r.iteration << ','
        << r.batch_size << ',' << format_number(r.cmc_top1) << ',' << format_number(r.mean_reid_entropy) << ','
        << format_number(r.loss) << ',' << format_number(r.param_drift_l2) << ','
        << format_number(r.wallclock_ms_per_image) << ',' << (r.strength ? format_number(*r.strength) : "") << "\n";
  }
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move " + tmp + " to " + path);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ostringstream s;
  write_metrics_csv(s, records);
  write_file_atomic(path, s.str());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw std::runtime_error(path + ": unexpected header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c = split_csv_line(line);
    if (c.size() != 12) throw std::runtime_error(path + ": malformed row '" + line + "'");
    MetricsRecord r;
    r.run_id = c[0];
    r.method = c[1];
    r.seed = std::stoull(c[2]);
    r.phase = std::stoul(c[3]);
    r.iteration = std::stoul(c[4]);
    r.batch_size = std::stoul(c[5]);
    r.cmc_top1 = std::stod(c[6]);
    r.mean_reid_entropy = std::stod(c[7]);
    r.loss = std::stod(c[8]);
    r.param_drift_l2 = std::stod(c[9]);
    r.wallclock_ms_per_image = std::stod(c[10]);
    if (!c[11].empty()) r.strength = std::stod(c[11]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace temp::harness
