#include "adrop/strategies.hpp"

#include <cmath>
#include <limits>

#include "adrop/errors.hpp"

namespace adrop {

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::AsyncDrop:
      return "asyncdrop";
    case StrategyKind::HeteroAsyncDrop:
      return "hetero_asyncdrop";
    case StrategyKind::AsyncFedAvg:
      return "async_fedavg";
    case StrategyKind::AsyncFedWeightedAvg:
      return "async_fedweightedavg";
    case StrategyKind::AsyncFedProx:
      return "async_fedprox";
    case StrategyKind::AsyncFjord:
      return "async_fjord";
    case StrategyKind::FedBuff:
      return "fedbuff";
    case StrategyKind::SyncFedAvg:
      return "sync_fedavg";
  }
  return "?";
}

StrategyKind strategy_from_string(const std::string& name) {
  for (auto k : {StrategyKind::AsyncDrop, StrategyKind::HeteroAsyncDrop,
                 StrategyKind::AsyncFedAvg, StrategyKind::AsyncFedWeightedAvg,
                 StrategyKind::AsyncFedProx, StrategyKind::AsyncFjord,
                 StrategyKind::FedBuff, StrategyKind::SyncFedAvg})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown strategy: '" + name + "'");
}

bool is_masked_strategy(StrategyKind kind) {
  return kind == StrategyKind::AsyncDrop || kind == StrategyKind::HeteroAsyncDrop ||
         kind == StrategyKind::AsyncFjord;
}

void StrategySpec::validate() const {
  if (local_iters < 1) throw ConfigError("strategy: local_iters must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigError("strategy: alpha must be in (0, 1]");
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw ConfigError("strategy: keep_rate must be in (0, 1]");
  if (mu < 0.0) throw ConfigError("strategy: mu must be >= 0");
  if (buffer_size < 1) throw ConfigError("strategy: buffer_size must be >= 1");
  if (eta <= 0.0) throw ConfigError("strategy: eta must be > 0");
  if (layerwise && kind != StrategyKind::HeteroAsyncDrop)
    throw ConfigError("strategy: layerwise masks apply to hetero_asyncdrop only");
}

double Model::accuracy(const ModelParams&, const Dataset&) const {
  return std::numeric_limits<double>::quiet_NaN();
}

CnnRegressorModel::CnnRegressorModel(std::size_t filters, std::size_t patch_width,
                                     std::size_t channels, std::size_t pixels,
                                     double kappa, double scale,
                                     std::uint64_t arch_seed)
    : patch_width_(patch_width) {
  Rng rng(arch_seed);
  cnn_ = make_cnn(filters, patch_width, channels, pixels, kappa, scale, rng);
}

void CnnRegressorModel::bind_dataset(const Dataset& data) {
  patches_for(data);
}

const std::vector<PatchedInput>& CnnRegressorModel::patches_for(
    const Dataset& data) const {
  for (const auto& [key, patches] : cache_)
    if (key == &data) return patches;
  cache_.emplace_back(&data, patch_dataset(data, patch_width_));
  return cache_.back().second;
}

ModelParams CnnRegressorModel::init_params(Rng& rng) const {
  return init_cnn_params(cnn_, rng);
}

double CnnRegressorModel::data_loss(const ModelParams& w, const Dataset& data,
                                    std::span<const std::size_t> idx,
                                    const DropoutMask* mask) const {
  const auto& all = patches_for(data);
  std::vector<PatchedInput> subset;
  subset.reserve(idx.size());
  std::vector<double> targets;
  targets.reserve(idx.size());
  for (auto i : idx) {
    subset.push_back(all[i]);
    targets.push_back(data.targets[i]);
  }
  const auto u = cnn_outputs(cnn_, w, subset, mask);
  return mse_loss(u, targets);
}

ModelParams CnnRegressorModel::gradient(const ModelParams& w, const Dataset& data,
                                        std::span<const std::size_t> idx,
                                        const DropoutMask* mask) const {
  const auto& all = patches_for(data);
  std::vector<PatchedInput> subset;
  subset.reserve(idx.size());
  std::vector<double> targets;
  targets.reserve(idx.size());
  for (auto i : idx) {
    subset.push_back(all[i]);
    targets.push_back(data.targets[i]);
  }
  return cnn_gradient(cnn_, w, subset, targets, mask);
}

double CnnRegressorModel::eval_loss(const ModelParams& w,
                                    const Dataset& data) const {
  const auto& all = patches_for(data);
  const auto u = cnn_outputs(cnn_, w, all, nullptr);
  return mse_loss(u, data.targets);
}

MlpClassifierModel::MlpClassifierModel(std::size_t input_dim, std::size_t hidden,
                                       std::size_t output_dim, double init_scale,
                                       bool softmax_ce)
    : init_scale_(init_scale) {
  mlp_.input_dim = input_dim;
  mlp_.hidden = hidden;
  mlp_.output_dim = output_dim;
  mlp_.softmax_ce = softmax_ce;
}

ModelParams MlpClassifierModel::init_params(Rng& rng) const {
  return init_mlp_params(mlp_, init_scale_, rng);
}

double MlpClassifierModel::data_loss(const ModelParams& w, const Dataset& data,
                                     std::span<const std::size_t> idx,
                                     const DropoutMask* mask) const {
  return mlp_forward_backward(mlp_, w, data, idx, mask).loss;
}

ModelParams MlpClassifierModel::gradient(const ModelParams& w,
                                         const Dataset& data,
                                         std::span<const std::size_t> idx,
                                         const DropoutMask* mask) const {
  return std::move(mlp_forward_backward(mlp_, w, data, idx, mask).gradients);
}

double MlpClassifierModel::eval_loss(const ModelParams& w,
                                     const Dataset& data) const {
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return mlp_forward_backward(mlp_, w, data, idx, nullptr).loss;
}

double MlpClassifierModel::accuracy(const ModelParams& w,
                                    const Dataset& data) const {
  if (data.classes == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto result = mlp_forward_backward(mlp_, w, data, idx, nullptr);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double* row = result.outputs.data() + i * mlp_.output_dim;
    std::size_t best = 0;
    for (std::size_t o = 1; o < mlp_.output_dim; ++o)
      if (row[o] > row[best]) best = o;
    hits += best == data.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double local_objective(const StrategySpec& spec, const Model& model,
                       const ModelParams& local, const ModelParams& fetched,
                       const Dataset& data, std::span<const std::size_t> batch,
                       const DropoutMask* mask) {
  double obj = model.data_loss(local, data, batch, mask);
  if (spec.mu != 0.0) {
    if (!local.same_shape(fetched))
      throw DimensionError("local_objective: local/fetched shape mismatch");
    double sq = 0.0;
    for (std::size_t gi = 0; gi < local.groups.size(); ++gi) {
      const auto& a = local.groups[gi].values;
      const auto& b = fetched.groups[gi].values;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
      }
    }
    obj += 0.5 * spec.mu * sq;
  }
  return obj;
}

namespace {

DropoutMask strategy_mask(const StrategySpec& spec, std::size_t capacity_level,
                          std::size_t level_count, const GlobalStore& store,
                          const Model& model, std::uint64_t seed) {
  switch (spec.kind) {
    case StrategyKind::AsyncDrop:
      return random_mask(model.unit_count(), spec.keep_rate, spec.mask_mode,
                         seed);
    case StrategyKind::HeteroAsyncDrop:
      if (spec.layerwise)
        return layerwise_mask(store.layer_scores(), capacity_level, level_count,
                              spec.keep_rate);
      return hetero_mask(store.unit_scores(), capacity_level, level_count,
                         spec.keep_rate);
    case StrategyKind::AsyncFjord:
      return ordered_mask(model.unit_count(), capacity_level, level_count);
    default:
      return full_mask(model.unit_count());
  }
}

}  // namespace

RoundResult client_round(const StrategySpec& spec, std::uint32_t client_id,
                         std::size_t capacity_level, std::size_t level_count,
                         const GlobalStore& store, const Model& model,
                         const Dataset& train,
                         std::span<const std::size_t> shard,
                         std::uint64_t round_seed) {
  if (shard.empty()) throw ConfigError("client_round: empty data shard");
  auto snapshot = store.fetch();

  const DropoutMask mask = strategy_mask(spec, capacity_level, level_count,
                                         store, model, round_seed);
  if (mask.layerwise() && mask.kept_count() == 0)
    throw DegenerateMaskError("client_round: mask drops the whole model");

  const std::size_t total = snapshot.params.total_values();
  const std::size_t kept = kept_value_count(snapshot.params, mask);

  ModelParams local = snapshot.params;
  apply_mask(local, mask);
  const ModelParams fetched = local;  // prox anchor (the masked projection)

  Rng batch_rng(derive_seed(round_seed, 0xBA7C));
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::vector<std::size_t> batch;
  for (std::size_t it = 0; it < spec.local_iters; ++it) {
    std::span<const std::size_t> view = shard;
    if (spec.batch_size > 0 && spec.batch_size < shard.size()) {
      batch.clear();
      for (std::size_t k = 0; k < spec.batch_size; ++k) {
        if (cursor == 0 || cursor >= order.size()) {
          const auto perm = batch_rng.permutation(shard.size());
          order.resize(shard.size());
          for (std::size_t i = 0; i < perm.size(); ++i) order[i] = shard[perm[i]];
          cursor = 0;
        }
        batch.push_back(order[cursor++]);
      }
      view = batch;
    }
    ModelParams grad = model.gradient(local, train, view, &mask);
    if (spec.mu != 0.0) {
      // FedProx: + mu (W - W_fetched) on top of the data gradient.
      for (std::size_t gi = 0; gi < grad.groups.size(); ++gi) {
        auto& g = grad.groups[gi].values;
        const auto& a = local.groups[gi].values;
        const auto& b = fetched.groups[gi].values;
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += spec.mu * (a[i] - b[i]);
      }
    }
    sgd_step(local, grad, spec.eta);
  }

  RoundResult result;
  result.envelope.client_id = client_id;
  result.envelope.mask = mask;
  result.envelope.local_params = std::move(local);
  result.envelope.base_version = snapshot.version;
  result.cost.params_down = kept;
  result.cost.params_up = kept;
  result.cost.compute_units = static_cast<double>(spec.local_iters) *
                              static_cast<double>(kept) /
                              static_cast<double>(total);
  return result;
}

MergeResult merge_for(const StrategySpec& spec, GlobalStore& store,
                      UpdateEnvelope& envelope) {
  if (!is_masked_strategy(spec.kind) && !envelope.mask.all_kept())
    throw ContractError("merge_for: full-model strategy got a masked envelope");
  switch (spec.kind) {
    case StrategyKind::AsyncDrop:
    case StrategyKind::HeteroAsyncDrop:
    case StrategyKind::AsyncFjord:
      return {MergeOutcome::Committed, store.masked_merge(envelope, spec.alpha)};
    case StrategyKind::AsyncFedAvg:
    case StrategyKind::AsyncFedProx:
      return {MergeOutcome::Committed, store.plain_merge(envelope, spec.alpha)};
    case StrategyKind::AsyncFedWeightedAvg:
      return {MergeOutcome::Committed,
              store.weighted_merge(envelope, spec.alpha)};
    case StrategyKind::FedBuff:
      return store.buffered_merge(envelope, spec.buffer_size, spec.alpha);
    case StrategyKind::SyncFedAvg:
      // Barrier semantics: the simulator dispatches in waves and sets
      // buffer_size to the active-client count; the wave average replaces
      // the global model.
      return store.buffered_merge(envelope, spec.buffer_size, 1.0);
  }
  throw ContractError("merge_for: unhandled strategy");
}

}  // namespace adrop
