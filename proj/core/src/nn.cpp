#include "adrop/nn.hpp"

#include <cmath>

#include "adrop/errors.hpp"

namespace adrop {

namespace {
inline double relu(double z) { return z > 0.0 ? z : 0.0; }
// Subgradient at 0 is 0.
inline double relu_active(double z) { return z > 0.0 ? 1.0 : 0.0; }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
}  // namespace

PatchedInput patch(std::span<const double> image, std::size_t channels,
                   std::size_t pixels, std::size_t patch_width) {
  if (patch_width < 1 || pixels < 1)
    throw ConfigError("patch: patch width and pixel count must be >= 1");
  if (patch_width > pixels)
    throw ConfigError("patch: invalid patch width (q > p)");
  if (image.size() != channels * pixels)
    throw DimensionError("patch: image size does not match channels * pixels");

  PatchedInput out;
  out.rows = patch_width * channels;
  out.cols = pixels;
  out.m.assign(out.rows * out.cols, 0.0);
  // Column j stacks channels of pixels j..j+q-1; zeros past the right edge.
  for (std::size_t j = 0; j < pixels; ++j) {
    double* col = out.m.data() + j * out.rows;
    for (std::size_t k = 0; k < patch_width; ++k) {
      if (j + k >= pixels) break;
      for (std::size_t c = 0; c < channels; ++c)
        col[k * channels + c] = image[c * pixels + j + k];
    }
  }
  return out;
}

std::vector<PatchedInput> patch_dataset(const Dataset& data,
                                        std::size_t patch_width) {
  std::vector<PatchedInput> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out.push_back(patch(data.input(i), data.channels, data.pixels, patch_width));
  return out;
}

CnnModel make_cnn(std::size_t filters, std::size_t patch_width,
                  std::size_t channels, std::size_t pixels, double kappa,
                  double scale, Rng& rng) {
  CnnModel m;
  m.filters = filters;
  m.patch_rows = patch_width * channels;
  m.pixels = pixels;
  m.kappa = kappa;
  m.scale = scale;
  const double mag =
      1.0 / (static_cast<double>(pixels) * std::sqrt(static_cast<double>(filters)));
  m.a.resize(filters * pixels);
  for (auto& v : m.a) v = rng.bernoulli(0.5) ? mag : -mag;
  return m;
}

ModelParams init_cnn_params(const CnnModel& model, Rng& rng) {
  ModelParams p;
  p.groups.push_back(make_group("conv.filters", model.filters, model.patch_rows,
                                UnitAxis::Row, 0));
  for (auto& v : p.groups[0].values) v = rng.normal(0.0, model.kappa);
  return p;
}

namespace {
const ParamGroup& cnn_weights(const CnnModel& model, const ModelParams& w) {
  if (w.groups.size() != 1 || w.groups[0].rows != model.filters ||
      w.groups[0].cols != model.patch_rows)
    throw DimensionError("cnn: parameter shape does not match the model");
  return w.groups[0];
}
}  // namespace

double cnn_forward(const CnnModel& model, const ModelParams& w,
                   const PatchedInput& x) {
  const auto& W = cnn_weights(model, w);
  if (x.rows != model.patch_rows || x.cols != model.pixels)
    throw DimensionError("cnn_forward: patched input shape mismatch");
  double u = 0.0;
  for (std::size_t r = 0; r < model.filters; ++r) {
    const std::span<const double> wr{W.values.data() + r * W.cols, W.cols};
    for (std::size_t j = 0; j < model.pixels; ++j)
      u += model.a_at(r, j) * relu(dot(x.column(j), wr));
  }
  return model.scale * u;
}

std::vector<double> cnn_outputs(const CnnModel& model, const ModelParams& w,
                                std::span<const PatchedInput> xs,
                                const DropoutMask* mask) {
  const auto& W = cnn_weights(model, w);
  std::vector<double> out(xs.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    if (x.rows != model.patch_rows || x.cols != model.pixels)
      throw DimensionError("cnn_outputs: patched input shape mismatch");
    double u = 0.0;
    for (std::size_t r = 0; r < model.filters; ++r) {
      if (mask && !mask->kept[r]) continue;
      const std::span<const double> wr{W.values.data() + r * W.cols, W.cols};
      for (std::size_t j = 0; j < model.pixels; ++j)
        u += model.a_at(r, j) * relu(dot(x.column(j), wr));
    }
    out[i] = mask ? u : model.scale * u;
  }
  return out;
}

ModelParams cnn_gradient(const CnnModel& model, const ModelParams& w,
                         std::span<const PatchedInput> xs,
                         std::span<const double> targets,
                         const DropoutMask* mask) {
  const auto& W = cnn_weights(model, w);
  if (targets.size() != xs.size())
    throw DimensionError("cnn_gradient: targets/input count mismatch");

  ModelParams grad;
  grad.groups.push_back(make_group(W.name, W.rows, W.cols, W.unit_axis, 0));
  auto& G = grad.groups[0];

  const auto outputs = cnn_outputs(model, w, xs, mask);
  // d sum_i (u_i - y_i)^2 / dw_r = 2 c sum_i sum_j (u_i - y_i) a_rj xhat_i^(j)
  // over active patches; c is the output scale (xi for the full net, the
  // filter indicator for a subnetwork).
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double res = 2.0 * (outputs[i] - targets[i]);
    const auto& x = xs[i];
    for (std::size_t r = 0; r < model.filters; ++r) {
      if (mask && !mask->kept[r]) continue;
      const std::span<const double> wr{W.values.data() + r * W.cols, W.cols};
      double* gr = G.values.data() + r * G.cols;
      for (std::size_t j = 0; j < model.pixels; ++j) {
        const auto xj = x.column(j);
        if (relu_active(dot(xj, wr)) == 0.0) continue;
        const double coef =
            res * (mask ? 1.0 : model.scale) * model.a_at(r, j);
        for (std::size_t k = 0; k < xj.size(); ++k) gr[k] += coef * xj[k];
      }
    }
  }
  return grad;
}

ModelParams init_mlp_params(const MlpModel& model, double init_scale, Rng& rng) {
  ModelParams p;
  p.groups.push_back(
      make_group("fc1.weight", model.hidden, model.input_dim, UnitAxis::Row, 0));
  p.groups.push_back(
      make_group("fc2.weight", model.output_dim, model.hidden, UnitAxis::Col, 1));
  for (auto& g : p.groups) {
    const double sd = init_scale / std::sqrt(static_cast<double>(g.cols));
    for (auto& v : g.values) v = rng.normal(0.0, sd);
  }
  return p;
}

MlpBatchResult mlp_forward_backward(const MlpModel& model, const ModelParams& w,
                                    const Dataset& data,
                                    std::span<const std::size_t> batch,
                                    const DropoutMask* mask) {
  if (w.groups.size() != 2 || w.groups[0].rows != model.hidden ||
      w.groups[0].cols != model.input_dim ||
      w.groups[1].rows != model.output_dim || w.groups[1].cols != model.hidden)
    throw DimensionError("mlp: parameter shape does not match the model");
  if (data.input_dim() != model.input_dim)
    throw DimensionError("mlp: dataset input dim mismatch");
  const std::size_t target_w = data.classes == 0 ? 1 : data.classes;
  if (target_w != model.output_dim)
    throw DimensionError("mlp: dataset target width mismatch");

  const auto& W1 = w.groups[0];
  const auto& W2 = w.groups[1];
  MlpBatchResult result;
  result.gradients.groups.push_back(
      make_group(W1.name, W1.rows, W1.cols, W1.unit_axis, W1.layer_id));
  result.gradients.groups.push_back(
      make_group(W2.name, W2.rows, W2.cols, W2.unit_axis, W2.layer_id));
  auto& G1 = result.gradients.groups[0];
  auto& G2 = result.gradients.groups[1];
  result.outputs.assign(batch.size() * model.output_dim, 0.0);

  const bool layer1_dropped = mask && mask->layerwise() && !mask->kept[0];
  const bool layer2_dropped = mask && mask->layerwise() && !mask->kept[1];
  const bool unit_mask = mask && !mask->layerwise();

  std::vector<double> z(model.hidden), h(model.hidden), out(model.output_dim),
      dout(model.output_dim), dh(model.hidden);
  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const auto x = data.input(batch[bi]);
    for (std::size_t r = 0; r < model.hidden; ++r) {
      if ((unit_mask && !mask->kept[r]) || layer1_dropped) {
        z[r] = 0.0;
        h[r] = 0.0;
        continue;
      }
      z[r] = dot({W1.values.data() + r * W1.cols, W1.cols}, x);
      h[r] = relu(z[r]);
    }
    for (std::size_t o = 0; o < model.output_dim; ++o)
      out[o] = layer2_dropped
                   ? 0.0
                   : dot({W2.values.data() + o * W2.cols, W2.cols}, h);

    const auto y = data.target_row(batch[bi]);
    if (model.softmax_ce) {
      double mx = out[0];
      for (double v : out) mx = std::max(mx, v);
      double denom = 0.0;
      for (std::size_t o = 0; o < model.output_dim; ++o)
        denom += std::exp(out[o] - mx);
      for (std::size_t o = 0; o < model.output_dim; ++o) {
        const double p = std::exp(out[o] - mx) / denom;
        result.outputs[bi * model.output_dim + o] = p;
        result.loss -= y[o] * std::log(std::max(p, 1e-300));
        dout[o] = p - y[o];
      }
    } else {
      for (std::size_t o = 0; o < model.output_dim; ++o) {
        result.outputs[bi * model.output_dim + o] = out[o];
        const double r = out[o] - y[o];
        result.loss += r * r;
        dout[o] = 2.0 * r;
      }
    }

    if (!layer2_dropped) {
      for (std::size_t o = 0; o < model.output_dim; ++o) {
        double* g2 = G2.values.data() + o * G2.cols;
        for (std::size_t r = 0; r < model.hidden; ++r) g2[r] += dout[o] * h[r];
      }
    }
    for (std::size_t r = 0; r < model.hidden; ++r) {
      if ((unit_mask && !mask->kept[r]) || layer1_dropped || layer2_dropped) {
        dh[r] = 0.0;
        continue;
      }
      double s = 0.0;
      for (std::size_t o = 0; o < model.output_dim; ++o)
        s += W2.at(o, r) * dout[o];
      dh[r] = s * relu_active(z[r]);
    }
    if (!layer1_dropped) {
      for (std::size_t r = 0; r < model.hidden; ++r) {
        if (dh[r] == 0.0) continue;
        double* g1 = G1.values.data() + r * G1.cols;
        for (std::size_t k = 0; k < model.input_dim; ++k)
          g1[k] += dh[r] * x[k];
      }
    }
  }
  return result;
}

double mse_loss(std::span<const double> predictions,
                std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw DimensionError("mse_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    s += r * r;
  }
  return s;
}

void sgd_step(ModelParams& params, const ModelParams& gradient, double eta) {
  if (eta < 0.0) throw ConfigError("sgd_step: learning rate must be >= 0");
  if (!gradient.all_finite())
    throw NumericError("sgd_step: non-finite gradient");
  axpy_update(params, gradient, eta);
}

}  // namespace adrop
