#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "adrop/masking.hpp"
#include "adrop/params.hpp"

namespace adrop {

// One client's write-back: the trained submodel, its mask, and the fetched
// base version. Dropped coordinates of local_params are zero. staleness is
// filled in by the store at write time (commits between fetch and commit).
struct UpdateEnvelope {
  std::uint32_t client_id = 0;
  DropoutMask mask;
  ModelParams local_params;
  std::uint64_t base_version = 0;
  std::uint64_t staleness = 0;
};

enum class MergeOutcome : std::uint8_t { Committed, Buffered };

struct MergeResult {
  MergeOutcome outcome = MergeOutcome::Committed;
  std::uint64_t version = 0;  // post-merge version when committed
};

enum class StoreMode : std::uint8_t {
  Serialized,  // single logical timeline, fully deterministic (default)
  Concurrent,  // per-group atomic merges, torn cross-group reads permitted
};

struct CommitLogEntry {
  std::uint64_t base_version = 0;
  std::uint64_t commit_version = 0;  // version after this commit
  std::uint32_t client_id = 0;
};

// The shared global model: versioned fetch, the masked asynchronous
// write-back, baseline merge variants and the S-client averaged merge.
// Score tables are refreshed synchronously inside every commit.
class GlobalStore {
 public:
  explicit GlobalStore(ModelParams init, StoreMode mode = StoreMode::Serialized);

  struct Snapshot {
    ModelParams params;
    std::uint64_t version = 0;
  };
  // Immutable copy, consistent at one version in serialized mode; per-group
  // consistent in concurrent mode.
  Snapshot fetch() const;

  std::uint64_t version() const;

  // W <- W ⊙ Mc + ((1-alpha) W + alpha W_i) ⊙ M. Complement coordinates are
  // left bit-identical. Records staleness on the envelope.
  std::uint64_t masked_merge(UpdateEnvelope& update, double alpha);
  // Unmasked convex mix (Async FedAvg / FedProx write path).
  std::uint64_t plain_merge(UpdateEnvelope& update, double alpha);
  // plain_merge with effective alpha = alpha_base / (1 + staleness).
  std::uint64_t weighted_merge(UpdateEnvelope& update, double alpha_base);
  // FedBuff: accumulate; on the K-th buffered update commit their
  // parameter-wise average via the plain rule and clear the buffer.
  MergeResult buffered_merge(UpdateEnvelope& update, std::size_t buffer_size,
                             double alpha);
  // Appendix-style simultaneous merge of S same-base envelopes: per unit,
  // average the keepers' values (normalizer N_r), then masked_merge with the
  // union mask. Units kept by nobody are untouched.
  std::uint64_t group_averaged_merge(std::span<UpdateEnvelope> updates,
                                     double alpha);

  const ScoreTable& unit_scores() const { return unit_scores_; }
  const ScoreTable& layer_scores() const { return layer_scores_; }

  std::span<const CommitLogEntry> commit_log() const { return commit_log_; }
  std::size_t buffered_count() const { return buffer_count_; }
  // Alg. 3 names a global-LR update for the fastest client but gives no
  // rule; we keep eta constant and count the events.
  void note_fastest_client_commit() { ++fastest_commit_events_; }
  std::uint64_t fastest_commit_events() const { return fastest_commit_events_; }

 private:
  void check_update(const UpdateEnvelope& update) const;
  std::uint64_t commit(const UpdateEnvelope& update, const ModelParams& local,
                       const DropoutMask* mask, double alpha);
  void refresh_scores();

  ModelParams params_;
  StoreMode mode_;
  ScoreTable unit_scores_;
  ScoreTable layer_scores_;
  std::vector<CommitLogEntry> commit_log_;

  // FedBuff / sync barrier accumulator.
  ModelParams buffer_sum_;
  std::size_t buffer_count_ = 0;
  std::uint64_t buffer_min_base_ = 0;

  std::uint64_t fastest_commit_events_ = 0;

  // Concurrent mode state.
  mutable std::vector<std::unique_ptr<std::mutex>> group_locks_;
  mutable std::mutex meta_lock_;
};

}  // namespace adrop
