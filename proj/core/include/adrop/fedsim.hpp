#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "adrop/datagen.hpp"
#include "adrop/metrics.hpp"
#include "adrop/store.hpp"
#include "adrop/strategies.hpp"

namespace adrop {

// Capacity level 1 is the fastest. compute_delay is simulated seconds per
// local iteration per unit kept-fraction; comm_delay is simulated seconds
// per transferred parameter.
struct ClientProfile {
  std::uint32_t id = 0;
  std::size_t capacity_level = 1;
  double compute_delay = 1.0;
  double comm_delay = 0.0;
  std::size_t shard_id = 0;
};

struct SimConfig {
  std::size_t num_clients = 104;
  std::size_t active_clients = 8;
  std::size_t levels = 8;
  double speed_ratio = 5.0;   // slowest / fastest delay
  double base_compute_delay = 1.0;
  double base_comm_delay = 1e-4;
  std::uint64_t max_commits = 0;   // T; 0 = no commit cap
  std::size_t epoch_budget = 0;    // fastest-client rounds; 0 = no cap
  std::size_t eval_every = 1;      // test metrics every k-th commit (0 =
                                   // fastest-level boundaries only)
  std::uint64_t seed = 1;
  bool threaded = false;           // demonstration mode, not asserted on

  void validate() const;
};

enum class EventKind : std::uint8_t { Dispatch, Complete };

struct SimEvent {
  double time = 0.0;
  EventKind kind = EventKind::Complete;
  std::uint32_t client_id = 0;
  std::uint64_t sequence_no = 0;  // FIFO tie-break
};

// Delays linear in level between the fastest and speed_ratio x slower;
// clients round-robin assigned to levels.
std::vector<ClientProfile> build_clients(const SimConfig& config);

struct SimSummary {
  std::vector<MetricsRecord> trace;
  std::uint64_t commits = 0;
  std::uint64_t truncated_in_flight = 0;  // discarded at termination
  double end_time = 0.0;
  // Conservation-of-work accounting: simulated compute seconds per client.
  std::vector<double> compute_time_per_client;
  std::vector<std::uint64_t> rounds_per_client;
};

class Simulation {
 public:
  Simulation(SimConfig config, StrategySpec strategy, const Model& model,
             const Dataset& train, const Dataset* test, ShardPlan shards);

  SimSummary run();
  // HogWild-style demonstration: one thread per active client over the
  // concurrent-mode store. Only liveness/invariant monitors; returns the
  // commit count observed.
  std::uint64_t run_threaded_demo(std::uint64_t target_commits);

 private:
  SimConfig config_;
  StrategySpec strategy_;
  const Model& model_;
  const Dataset& train_;
  const Dataset* test_;
  ShardPlan shards_;
  std::vector<ClientProfile> clients_;
};

// Exact staleness counts from a trace; .first is the histogram, .second the
// maximum delta observed.
std::pair<std::map<std::uint64_t, std::uint64_t>, std::uint64_t>
staleness_histogram(std::span<const MetricsRecord> trace);

}  // namespace adrop
