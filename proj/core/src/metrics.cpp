#include "adrop/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "adrop/errors.hpp"

namespace adrop {

const char* const kMetricsHeader =
    "sim_time,event_index,global_version,client_id,capacity_level,train_loss,"
    "test_loss,test_accuracy,cum_params_down,cum_params_up,staleness";

namespace {

void put_double(std::string& out, double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void put_u64(std::string& out, std::uint64_t v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
    throw ParseError("metrics: bad float at row " + std::to_string(row) +
                     ", column " + std::to_string(col));
  return v;
}

std::uint64_t parse_u64(std::string_view cell, std::size_t row, std::size_t col) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
    throw ParseError("metrics: bad integer at row " + std::to_string(row) +
                     ", column " + std::to_string(col));
  return v;
}

}  // namespace

std::string format_record(const MetricsRecord& r) {
  std::string out;
  out.reserve(160);
  put_double(out, r.sim_time);
  out.push_back(',');
  put_u64(out, r.event_index);
  out.push_back(',');
  put_u64(out, r.global_version);
  out.push_back(',');
  put_u64(out, r.client_id);
  out.push_back(',');
  put_u64(out, r.capacity_level);
  out.push_back(',');
  put_double(out, r.train_loss);
  out.push_back(',');
  put_double(out, r.test_loss);
  out.push_back(',');
  put_double(out, r.test_accuracy);
  out.push_back(',');
  put_u64(out, r.cum_params_down);
  out.push_back(',');
  put_u64(out, r.cum_params_up);
  out.push_back(',');
  put_u64(out, r.staleness);
  return out;
}

MetricsWriter::MetricsWriter(const std::string& path)
    : os_(path, std::ios::trunc) {
  if (!os_) throw ParseError("metrics: cannot open for writing: " + path);
  os_ << kMetricsHeader << "\n";
}

void MetricsWriter::append(const MetricsRecord& rec) {
  os_ << format_record(rec) << "\n";
}

void MetricsWriter::flush() { os_.flush(); }

std::vector<MetricsRecord> read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("metrics: cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader)
    throw ParseError("metrics: missing or unexpected header in " + path);
  std::vector<MetricsRecord> out;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::array<std::string_view, 11> cells;
    std::size_t start = 0, field = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= cells.size())
          throw ParseError("metrics: too many fields at row " + std::to_string(row));
        cells[field++] = std::string_view(line).substr(start, i - start);
        start = i + 1;
      }
    }
    if (field != cells.size())
      throw ParseError("metrics: wrong field count at row " + std::to_string(row));
    MetricsRecord r;
    r.sim_time = parse_double(cells[0], row, 1);
    r.event_index = parse_u64(cells[1], row, 2);
    r.global_version = parse_u64(cells[2], row, 3);
    r.client_id = static_cast<std::uint32_t>(parse_u64(cells[3], row, 4));
    r.capacity_level = static_cast<std::uint32_t>(parse_u64(cells[4], row, 5));
    r.train_loss = parse_double(cells[5], row, 6);
    r.test_loss = parse_double(cells[6], row, 7);
    r.test_accuracy = parse_double(cells[7], row, 8);
    r.cum_params_down = parse_u64(cells[8], row, 9);
    r.cum_params_up = parse_u64(cells[9], row, 10);
    r.staleness = parse_u64(cells[10], row, 11);
    out.push_back(r);
  }
  return out;
}

TargetMetric target_metric_from_string(const std::string& name) {
  if (name == "test_accuracy") return TargetMetric::TestAccuracy;
  if (name == "test_loss") return TargetMetric::TestLoss;
  if (name == "train_loss") return TargetMetric::TrainLoss;
  throw ConfigError("unknown target metric: '" + name + "'");
}

const char* to_string(TargetMetric metric) {
  switch (metric) {
    case TargetMetric::TestAccuracy:
      return "test_accuracy";
    case TargetMetric::TestLoss:
      return "test_loss";
    case TargetMetric::TrainLoss:
      return "train_loss";
  }
  return "?";
}

namespace {
double metric_of(const MetricsRecord& r, TargetMetric m) {
  switch (m) {
    case TargetMetric::TestAccuracy:
      return r.test_accuracy;
    case TargetMetric::TestLoss:
      return r.test_loss;
    case TargetMetric::TrainLoss:
      return r.train_loss;
  }
  return 0.0;
}
// Accuracy counts upward, losses downward.
bool reaches(double value, double threshold, TargetMetric m) {
  if (std::isnan(value)) return false;
  return m == TargetMetric::TestAccuracy ? value >= threshold
                                         : value <= threshold;
}
}  // namespace

std::optional<ThresholdHit> first_time_to_threshold(
    std::span<const MetricsRecord> trace, TargetMetric metric,
    double threshold) {
  for (const auto& r : trace) {
    if (reaches(metric_of(r, metric), threshold, metric))
      return ThresholdHit{r.sim_time, r.cum_params_down + r.cum_params_up};
  }
  return std::nullopt;
}

double second_lowest_best_metric(
    std::span<const std::pair<std::string, std::vector<MetricsRecord>>> traces,
    TargetMetric metric) {
  std::vector<double> best;
  for (const auto& [name, trace] : traces) {
    double b = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : trace) {
      const double v = metric_of(r, metric);
      if (std::isnan(v)) continue;
      if (std::isnan(b) ||
          (metric == TargetMetric::TestAccuracy ? v > b : v < b))
        b = v;
    }
    if (!std::isnan(b)) best.push_back(b);
  }
  if (best.empty())
    throw ContractError("second_lowest_best_metric: no usable traces");
  std::sort(best.begin(), best.end());
  return best.size() == 1 ? best[0] : best[1];
}

ComparisonTable compare_runs(
    std::span<const std::pair<std::string, std::vector<MetricsRecord>>> traces,
    TargetMetric metric, double threshold) {
  if (traces.size() < 1)
    throw ContractError("compare_runs: need at least one trace");
  ComparisonTable table;
  table.metric = metric;
  table.threshold = threshold;
  double best_time = std::numeric_limits<double>::infinity();
  double best_comm = std::numeric_limits<double>::infinity();
  for (const auto& [name, trace] : traces) {
    RunComparison row;
    row.name = name;
    double b = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : trace) {
      const double v = metric_of(r, metric);
      if (std::isnan(v)) continue;
      if (std::isnan(b) ||
          (metric == TargetMetric::TestAccuracy ? v > b : v < b))
        b = v;
    }
    row.best_metric = b;
    if (const auto hit = first_time_to_threshold(trace, metric, threshold)) {
      row.reached = true;
      row.time_to_threshold = hit->sim_time;
      row.comm_to_threshold = hit->cum_params;
      best_time = std::min(best_time, hit->sim_time);
      best_comm = std::min(best_comm, static_cast<double>(hit->cum_params));
    }
    table.rows.push_back(std::move(row));
  }
  for (auto& row : table.rows) {
    if (!row.reached) continue;
    row.time_overhead_pct =
        best_time > 0.0 ? 100.0 * (row.time_to_threshold / best_time - 1.0)
                        : 0.0;
    row.comm_overhead_pct =
        best_comm > 0.0
            ? 100.0 * (static_cast<double>(row.comm_to_threshold) / best_comm -
                       1.0)
            : 0.0;
  }
  return table;
}

std::string ComparisonTable::format() const {
  std::ostringstream os;
  os << "run,best_" << to_string(metric) << ",time_to_threshold,"
     << "comm_to_threshold,time_overhead,comm_overhead\n";
  char buf[64];
  auto pct = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%+.2f%%", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << r.name << ',' << r.best_metric << ',';
    if (!r.reached) {
      os << "N/A,N/A,N/A,N/A\n";
      continue;
    }
    os << r.time_to_threshold << 's' << ',' << r.comm_to_threshold << ','
       << pct(r.time_overhead_pct) << ',' << pct(r.comm_overhead_pct) << "\n";
  }
  return os.str();
}

}  // namespace adrop
