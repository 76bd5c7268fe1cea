#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adrop/masking.hpp"
#include "adrop/nn.hpp"
#include "adrop/store.hpp"

namespace adrop {

enum class StrategyKind : std::uint8_t {
  AsyncDrop,
  HeteroAsyncDrop,
  AsyncFedAvg,
  AsyncFedWeightedAvg,
  AsyncFedProx,
  AsyncFjord,
  FedBuff,
  SyncFedAvg,
};

const char* to_string(StrategyKind kind);
StrategyKind strategy_from_string(const std::string& name);
bool is_masked_strategy(StrategyKind kind);

struct StrategySpec {
  StrategyKind kind = StrategyKind::AsyncDrop;
  double keep_rate = 0.75;     // xi
  double alpha = 0.5;          // global mixing
  double eta = 0.05;           // local learning rate
  std::size_t local_iters = 50;  // l
  double mu = 0.0;             // FedProx proximal coefficient
  std::size_t buffer_size = 4;   // FedBuff K; sync runs set it to the
                                 // active-client count (barrier width)
  MaskMode mask_mode = MaskMode::ExactK;
  bool layerwise = false;      // hetero variant over layers
  std::size_t batch_size = 0;  // 0 = full-shard gradient

  void validate() const;
};

// Architecture-agnostic view the round/merge machinery trains through.
// Trainable params travel as ModelParams; fixed parts live in the adapter.
class Model {
 public:
  virtual ~Model() = default;
  virtual ModelParams init_params(Rng& rng) const = 0;
  virtual std::size_t unit_count() const = 0;
  virtual std::size_t layer_count() const = 0;
  // Loss the local steps minimize over the subset (subnetwork loss when
  // masked).
  virtual double data_loss(const ModelParams& w, const Dataset& data,
                           std::span<const std::size_t> idx,
                           const DropoutMask* mask) const = 0;
  virtual ModelParams gradient(const ModelParams& w, const Dataset& data,
                               std::span<const std::size_t> idx,
                               const DropoutMask* mask) const = 0;
  // Full-network evaluation loss over a whole dataset (scaled output for the
  // theory CNN).
  virtual double eval_loss(const ModelParams& w, const Dataset& data) const = 0;
  // Classification accuracy; NaN for regression models.
  virtual double accuracy(const ModelParams& w, const Dataset& data) const;
};

// One-hidden-layer CNN regressor; patches are precomputed per known dataset.
class CnnRegressorModel final : public Model {
 public:
  CnnRegressorModel(std::size_t filters, std::size_t patch_width,
                    std::size_t channels, std::size_t pixels, double kappa,
                    double scale, std::uint64_t arch_seed);
  void bind_dataset(const Dataset& data);

  ModelParams init_params(Rng& rng) const override;
  std::size_t unit_count() const override { return cnn_.filters; }
  std::size_t layer_count() const override { return 1; }
  double data_loss(const ModelParams& w, const Dataset& data,
                   std::span<const std::size_t> idx,
                   const DropoutMask* mask) const override;
  ModelParams gradient(const ModelParams& w, const Dataset& data,
                       std::span<const std::size_t> idx,
                       const DropoutMask* mask) const override;
  double eval_loss(const ModelParams& w, const Dataset& data) const override;

  const CnnModel& cnn() const { return cnn_; }

 private:
  const std::vector<PatchedInput>& patches_for(const Dataset& data) const;

  CnnModel cnn_;
  std::size_t patch_width_;
  mutable std::vector<std::pair<const Dataset*, std::vector<PatchedInput>>> cache_;
};

class MlpClassifierModel final : public Model {
 public:
  MlpClassifierModel(std::size_t input_dim, std::size_t hidden,
                     std::size_t output_dim, double init_scale,
                     bool softmax_ce);

  ModelParams init_params(Rng& rng) const override;
  std::size_t unit_count() const override { return mlp_.hidden; }
  std::size_t layer_count() const override { return 2; }
  double data_loss(const ModelParams& w, const Dataset& data,
                   std::span<const std::size_t> idx,
                   const DropoutMask* mask) const override;
  ModelParams gradient(const ModelParams& w, const Dataset& data,
                       std::span<const std::size_t> idx,
                       const DropoutMask* mask) const override;
  double eval_loss(const ModelParams& w, const Dataset& data) const override;
  double accuracy(const ModelParams& w, const Dataset& data) const override;

  const MlpModel& mlp() const { return mlp_; }

 private:
  MlpModel mlp_;
  double init_scale_;
};

struct CostReceipt {
  std::uint64_t params_down = 0;
  std::uint64_t params_up = 0;
  double compute_units = 0.0;  // local_iters * kept-parameter fraction
};

struct RoundResult {
  UpdateEnvelope envelope;
  CostReceipt cost;
};

// Local objective the round minimizes: data loss plus FedProx's
// (mu/2) ||W - W_fetched||^2 when mu > 0.
double local_objective(const StrategySpec& spec, const Model& model,
                       const ModelParams& local, const ModelParams& fetched,
                       const Dataset& data, std::span<const std::size_t> batch,
                       const DropoutMask* mask);

// fetch -> strategy mask -> l local SGD steps on the shard restricted to the
// submodel -> envelope + cost receipt.
RoundResult client_round(const StrategySpec& spec, std::uint32_t client_id,
                         std::size_t capacity_level, std::size_t level_count,
                         const GlobalStore& store, const Model& model,
                         const Dataset& train,
                         std::span<const std::size_t> shard,
                         std::uint64_t round_seed);

// Routes the envelope to the strategy's merge rule.
MergeResult merge_for(const StrategySpec& spec, GlobalStore& store,
                      UpdateEnvelope& envelope);

}  // namespace adrop
