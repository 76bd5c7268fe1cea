#include "adrop/store.hpp"

#include <cmath>

#include "adrop/errors.hpp"

namespace adrop {

namespace {
void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigError("merge: alpha must be in (0, 1]");
}
}  // namespace

GlobalStore::GlobalStore(ModelParams init, StoreMode mode)
    : params_(std::move(init)), mode_(mode) {
  if (!params_.all_finite())
    throw NumericError("GlobalStore: non-finite initialization");
  params_.version = 0;
  unit_scores_ = make_score_table(params_, /*layer_granularity=*/false);
  layer_scores_ = make_score_table(params_, /*layer_granularity=*/true);
  if (mode_ == StoreMode::Concurrent) {
    group_locks_.reserve(params_.groups.size());
    for (std::size_t i = 0; i < params_.groups.size(); ++i)
      group_locks_.push_back(std::make_unique<std::mutex>());
  }
}

GlobalStore::Snapshot GlobalStore::fetch() const {
  if (mode_ == StoreMode::Serialized) return {params_, params_.version};
  // Concurrent mode: copy group by group under that group's lock. Readers
  // may see different groups at different versions; that is the contract.
  Snapshot snap;
  snap.params.groups.resize(params_.groups.size());
  for (std::size_t i = 0; i < params_.groups.size(); ++i) {
    std::lock_guard<std::mutex> lk(*group_locks_[i]);
    snap.params.groups[i] = params_.groups[i];
  }
  std::lock_guard<std::mutex> lk(meta_lock_);
  snap.version = params_.version;
  snap.params.version = params_.version;
  return snap;
}

std::uint64_t GlobalStore::version() const {
  if (mode_ == StoreMode::Serialized) return params_.version;
  std::lock_guard<std::mutex> lk(meta_lock_);
  return params_.version;
}

void GlobalStore::check_update(const UpdateEnvelope& update) const {
  if (!update.local_params.same_shape(params_))
    throw DimensionError("merge: update shape does not match the store");
  if (update.base_version > params_.version)
    throw ContractError("merge: envelope base version is from the future");
  if (!update.local_params.all_finite())
    throw NumericError("merge: rejected non-finite local params");
}

std::uint64_t GlobalStore::commit(const UpdateEnvelope& update,
                                  const ModelParams& local,
                                  const DropoutMask* mask, double alpha) {
  for (std::size_t gi = 0; gi < params_.groups.size(); ++gi) {
    std::unique_lock<std::mutex> lk;
    if (mode_ == StoreMode::Concurrent)
      lk = std::unique_lock<std::mutex>(*group_locks_[gi]);
    auto& g = params_.groups[gi];
    const auto& l = local.groups[gi];
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      if (mask && !mask->keeps_coord(g, i)) continue;  // complement untouched
      if (alpha == 1.0)
        g.values[i] = l.values[i];
      else
        g.values[i] = (1.0 - alpha) * g.values[i] + alpha * l.values[i];
    }
  }
  std::unique_lock<std::mutex> meta;
  if (mode_ == StoreMode::Concurrent)
    meta = std::unique_lock<std::mutex>(meta_lock_);
  ++params_.version;
  commit_log_.push_back(
      {update.base_version, params_.version, update.client_id});
  refresh_scores();
  return params_.version;
}

void GlobalStore::refresh_scores() {
  update_scores(unit_scores_, params_);
  update_scores(layer_scores_, params_);
}

std::uint64_t GlobalStore::masked_merge(UpdateEnvelope& update, double alpha) {
  check_alpha(alpha);
  check_update(update);
  if (update.mask.unit_count() !=
      (update.mask.layerwise() ? params_.layer_count() : params_.unit_count()))
    throw DimensionError("masked_merge: mask does not match the store");
  update.staleness = version() - update.base_version;
  return commit(update, update.local_params, &update.mask, alpha);
}

std::uint64_t GlobalStore::plain_merge(UpdateEnvelope& update, double alpha) {
  check_alpha(alpha);
  check_update(update);
  update.staleness = version() - update.base_version;
  return commit(update, update.local_params, nullptr, alpha);
}

std::uint64_t GlobalStore::weighted_merge(UpdateEnvelope& update,
                                          double alpha_base) {
  check_alpha(alpha_base);
  check_update(update);
  update.staleness = version() - update.base_version;
  const double alpha =
      alpha_base / (1.0 + static_cast<double>(update.staleness));
  return commit(update, update.local_params, nullptr, alpha);
}

MergeResult GlobalStore::buffered_merge(UpdateEnvelope& update,
                                        std::size_t buffer_size, double alpha) {
  check_alpha(alpha);
  if (buffer_size < 1) throw ConfigError("buffered_merge: K must be >= 1");
  check_update(update);
  if (!update.mask.all_kept())
    throw ContractError("buffered_merge: expects full-model envelopes");
  std::unique_lock<std::mutex> meta;
  if (mode_ == StoreMode::Concurrent)
    meta = std::unique_lock<std::mutex>(meta_lock_);
  update.staleness = params_.version - update.base_version;
  if (buffer_count_ == 0) {
    buffer_sum_ = update.local_params;
    buffer_min_base_ = update.base_version;
  } else {
    for (std::size_t gi = 0; gi < buffer_sum_.groups.size(); ++gi) {
      auto& dst = buffer_sum_.groups[gi].values;
      const auto& src = update.local_params.groups[gi].values;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    buffer_min_base_ = std::min(buffer_min_base_, update.base_version);
  }
  ++buffer_count_;
  if (buffer_count_ < buffer_size) return {MergeOutcome::Buffered, params_.version};

  ModelParams avg = buffer_sum_;
  const double inv = 1.0 / static_cast<double>(buffer_count_);
  for (auto& g : avg.groups)
    for (auto& v : g.values) v = buffer_count_ == 1 ? v : v * inv;
  buffer_count_ = 0;
  buffer_sum_ = ModelParams{};
  UpdateEnvelope flush = update;
  flush.base_version = buffer_min_base_;
  if (meta.owns_lock()) meta.unlock();
  const auto ver = commit(flush, avg, nullptr, alpha);
  return {MergeOutcome::Committed, ver};
}

std::uint64_t GlobalStore::group_averaged_merge(std::span<UpdateEnvelope> updates,
                                                double alpha) {
  check_alpha(alpha);
  if (updates.empty())
    throw ContractError("group_averaged_merge: no envelopes");
  const std::uint64_t base = updates[0].base_version;
  for (auto& u : updates) {
    check_update(u);
    if (u.base_version != base)
      throw ContractError("group_averaged_merge: mixed base versions");
    if (u.mask.layerwise())
      throw ContractError("group_averaged_merge: unit-granularity masks only");
  }
  const std::size_t units = params_.unit_count();
  // Per-unit normalizer N_r = max(sum_s m_r, 1); union mask = Nperp.
  std::vector<std::uint32_t> keepers(units, 0);
  for (const auto& u : updates)
    for (std::size_t r = 0; r < units; ++r) keepers[r] += u.mask.kept[r];

  DropoutMask union_mask;
  union_mask.mode = updates[0].mask.mode;
  union_mask.keep_rate = updates[0].mask.keep_rate;
  union_mask.kept.assign(units, 0);
  for (std::size_t r = 0; r < units; ++r) union_mask.kept[r] = keepers[r] > 0;

  ModelParams merged = params_;
  for (std::size_t gi = 0; gi < merged.groups.size(); ++gi) {
    auto& g = merged.groups[gi];
    if (g.unit_axis == UnitAxis::None) continue;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const std::size_t r = g.unit_of(i);
      if (keepers[r] == 0) continue;
      double sum = 0.0;
      for (const auto& u : updates)
        if (u.mask.kept[r]) sum += u.local_params.groups[gi].values[i];
      g.values[i] =
          keepers[r] == 1 ? sum : sum / static_cast<double>(keepers[r]);
    }
  }

  const std::uint64_t delta = version() - base;
  for (auto& u : updates) u.staleness = delta;
  UpdateEnvelope rep = updates[0];
  return commit(rep, merged, &union_mask, alpha);
}

}  // namespace adrop
