#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adrop {

// One row of the run trace. Written as CSV in exactly this column order with
// round-trip-exact float rendering.
struct MetricsRecord {
  double sim_time = 0.0;
  std::uint64_t event_index = 0;
  std::uint64_t global_version = 0;
  std::uint32_t client_id = 0;
  std::uint32_t capacity_level = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;      // NaN when no test set
  double test_accuracy = 0.0;  // NaN for regression
  std::uint64_t cum_params_down = 0;
  std::uint64_t cum_params_up = 0;
  std::uint64_t staleness = 0;
};

extern const char* const kMetricsHeader;

std::string format_record(const MetricsRecord& rec);

// Append-only CSV writer; the header row goes out on construction.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricsRecord& rec);
  void flush();

 private:
  std::ofstream os_;
};

std::vector<MetricsRecord> read_trace(const std::string& path);

// Which column a threshold query scans.
enum class TargetMetric : std::uint8_t { TestAccuracy, TestLoss, TrainLoss };
TargetMetric target_metric_from_string(const std::string& name);
const char* to_string(TargetMetric metric);

// First simulated time at which the metric reaches the threshold (>= for
// accuracy, <= for losses), plus the communication spent by then.
struct ThresholdHit {
  double sim_time = 0.0;
  std::uint64_t cum_params = 0;  // down + up
};
std::optional<ThresholdHit> first_time_to_threshold(
    std::span<const MetricsRecord> trace, TargetMetric metric, double threshold);

// Per-run time/communication to a target plus relative overheads against the
// best run (the "+X%" columns). Runs that never reach it get N/A entries.
struct RunComparison {
  std::string name;
  double best_metric = 0.0;
  bool reached = false;
  double time_to_threshold = 0.0;
  std::uint64_t comm_to_threshold = 0;
  double time_overhead_pct = 0.0;  // vs best
  double comm_overhead_pct = 0.0;
};

struct ComparisonTable {
  std::vector<RunComparison> rows;
  double threshold = 0.0;
  TargetMetric metric = TargetMetric::TestAccuracy;
  std::string format() const;
};

ComparisonTable compare_runs(
    std::span<const std::pair<std::string, std::vector<MetricsRecord>>> traces,
    TargetMetric metric, double threshold);

// The paper's rule for picking the target: the second lowest best-metric
// among the runs (falls back to the minimum when only one run).
double second_lowest_best_metric(
    std::span<const std::pair<std::string, std::vector<MetricsRecord>>> traces,
    TargetMetric metric);

}  // namespace adrop
