#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "adrop/masking.hpp"
#include "adrop/params.hpp"
#include "adrop/rng.hpp"

namespace adrop {

// Training data. Samples are channels x pixels images stored flat
// (channel-major); regression targets in `targets`, classification adds
// integer labels and one-hot targets of width `classes`.
struct Dataset {
  std::size_t channels = 1;
  std::size_t pixels = 0;
  std::size_t classes = 0;  // 0 => regression
  double label_bound = 0.0; // C of the |y| <= C assumption (regression)
  std::vector<double> inputs;   // n * channels * pixels
  std::vector<double> targets;  // n (regression) or n * classes (one-hot)
  std::vector<std::uint32_t> labels;  // classification only

  std::size_t size() const {
    const std::size_t d = channels * pixels;
    return d == 0 ? 0 : inputs.size() / d;
  }
  std::size_t input_dim() const { return channels * pixels; }
  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * input_dim(), input_dim()};
  }
  std::span<const double> target_row(std::size_t i) const {
    const std::size_t w = classes == 0 ? 1 : classes;
    return {targets.data() + i * w, w};
  }
};

// x-hat = patching operator output: column j stacks channels of pixels
// j..j+q-1, zero-padded past the right edge. Stored column-major so each
// x-hat^(j) is contiguous.
struct PatchedInput {
  std::size_t rows = 0;  // q * channels
  std::size_t cols = 0;  // pixels
  std::vector<double> m; // column-major

  std::span<const double> column(std::size_t j) const {
    return {m.data() + j * rows, rows};
  }
};

PatchedInput patch(std::span<const double> image, std::size_t channels,
                   std::size_t pixels, std::size_t patch_width);

std::vector<PatchedInput> patch_dataset(const Dataset& data, std::size_t patch_width);

// One-hidden-layer CNN with a fixed second layer: filters W (m x q*channels,
// trainable) and aggregation weights a_rj in {+-1/(p sqrt(m))}. The network
// output is scale * sum_r sum_j a_rj relu(<xhat^(j), w_r>).
struct CnnModel {
  std::size_t filters = 0;     // m
  std::size_t patch_rows = 0;  // q * channels
  std::size_t pixels = 0;      // p
  double scale = 1.0;          // xi applied to the full-network output
  double kappa = 1.0;          // init stddev of W
  std::vector<double> a;       // m x p row-major, fixed after construction

  double a_at(std::size_t r, std::size_t j) const { return a[r * pixels + j]; }
};

// Draws a ~ +-1/(p sqrt(m)) and returns the model; init_cnn_params draws
// W ~ N(0, kappa^2).
CnnModel make_cnn(std::size_t filters, std::size_t patch_width,
                  std::size_t channels, std::size_t pixels, double kappa,
                  double scale, Rng& rng);
ModelParams init_cnn_params(const CnnModel& model, Rng& rng);

// Scaled full-network prediction for one patched input.
double cnn_forward(const CnnModel& model, const ModelParams& w,
                   const PatchedInput& x);
// Predictions over a patched dataset; masked => unscaled subnetwork outputs
// f_m (dropped filters contribute nothing).
std::vector<double> cnn_outputs(const CnnModel& model, const ModelParams& w,
                                std::span<const PatchedInput> xs,
                                const DropoutMask* mask = nullptr);
// Gradient of the summed squared error wrt W. With a mask, the loss is the
// subnetwork's; dropped filters' rows are exactly zero.
ModelParams cnn_gradient(const CnnModel& model, const ModelParams& w,
                         std::span<const PatchedInput> xs,
                         std::span<const double> targets,
                         const DropoutMask* mask = nullptr);

// Two-layer bias-free MLP: out = W2 relu(W1 x). Hidden neurons are the
// maskable units (W1 rows / W2 columns).
struct MlpModel {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::size_t output_dim = 0;
  bool softmax_ce = false;  // default is MSE on (one-hot) targets
};

ModelParams init_mlp_params(const MlpModel& model, double init_scale, Rng& rng);

struct MlpBatchResult {
  double loss = 0.0;
  ModelParams gradients;
  std::vector<double> outputs;  // n * output_dim (post-softmax when CE)
};

// Forward + backward over the index subset. Masked hidden neurons have zero
// activations and zero W1-row / W2-column gradients.
MlpBatchResult mlp_forward_backward(const MlpModel& model, const ModelParams& w,
                                    const Dataset& data,
                                    std::span<const std::size_t> batch,
                                    const DropoutMask* mask = nullptr);

// Sum of squared residuals (no 1/n).
double mse_loss(std::span<const double> predictions,
                std::span<const double> targets);

// params -= eta * gradient. Throws NumericError on non-finite gradients.
void sgd_step(ModelParams& params, const ModelParams& gradient, double eta);

}  // namespace adrop
