#include "adrop/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adrop/errors.hpp"
#include "adrop/rng.hpp"

namespace adrop {

const char* to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::Bernoulli:
      return "bernoulli";
    case MaskMode::ExactK:
      return "exact-k";
    case MaskMode::ScoreWindow:
      return "score-window";
    case MaskMode::OrderedPrefix:
      return "ordered-prefix";
    case MaskMode::Layerwise:
      return "layerwise";
  }
  return "?";
}

std::size_t DropoutMask::kept_count() const {
  std::size_t n = 0;
  for (auto k : kept) n += k != 0;
  return n;
}

DropoutMask DropoutMask::complement() const {
  DropoutMask c = *this;
  for (auto& k : c.kept) k = k ? 0 : 1;
  return c;
}

bool DropoutMask::keeps_coord(const ParamGroup& g, std::size_t flat) const {
  if (layerwise()) return kept[g.layer_id] != 0;
  if (g.unit_axis == UnitAxis::None) return true;
  return kept[g.unit_of(flat)] != 0;
}

DropoutMask full_mask(std::size_t num_units) {
  DropoutMask m;
  m.kept.assign(num_units, 1);
  m.keep_rate = 1.0;
  m.mode = MaskMode::ExactK;
  return m;
}

ScoreTable make_score_table(const ModelParams& baseline, bool layer_granularity) {
  ScoreTable t;
  t.baseline = baseline;
  t.layer_granularity = layer_granularity;
  t.scores.assign(
      layer_granularity ? baseline.layer_count() : baseline.unit_count(), 0.0);
  return t;
}

void update_scores(ScoreTable& table, const ModelParams& current) {
  if (!current.same_shape(table.baseline))
    throw DimensionError("update_scores: current params do not match baseline");
  std::fill(table.scores.begin(), table.scores.end(), 0.0);
  for (std::size_t gi = 0; gi < current.groups.size(); ++gi) {
    const auto& g = current.groups[gi];
    const auto& b = table.baseline.groups[gi];
    if (table.layer_granularity) {
      double s = 0.0;
      for (std::size_t i = 0; i < g.values.size(); ++i)
        s += std::abs(g.values[i] - b.values[i]);
      table.scores[g.layer_id] += s;
    } else {
      if (g.unit_axis == UnitAxis::None) continue;
      for (std::size_t i = 0; i < g.values.size(); ++i)
        table.scores[g.unit_of(i)] += std::abs(g.values[i] - b.values[i]);
    }
  }
}

double theta(double keep_rate, std::size_t subnetworks) {
  if (keep_rate <= 0.0 || keep_rate > 1.0)
    throw ConfigError("theta: keep_rate must be in (0, 1]");
  if (subnetworks < 1) throw ConfigError("theta: S must be >= 1");
  return 1.0 - std::pow(1.0 - keep_rate, static_cast<double>(subnetworks));
}

DropoutMask random_mask(std::size_t num_units, double keep_rate, MaskMode mode,
                        std::uint64_t seed) {
  if (keep_rate <= 0.0 || keep_rate > 1.0)
    throw ConfigError("random_mask: keep_rate must be in (0, 1]");
  DropoutMask m;
  m.keep_rate = keep_rate;
  m.mode = mode;
  if (keep_rate == 1.0) {
    // No randomness consumed: keeps full-rate strategies bit-identical to
    // their unmasked counterparts under equal seeds.
    m.kept.assign(num_units, 1);
    return m;
  }
  Rng rng(seed);
  switch (mode) {
    case MaskMode::Bernoulli: {
      m.kept.resize(num_units);
      for (auto& k : m.kept) k = rng.bernoulli(keep_rate) ? 1 : 0;
      break;
    }
    case MaskMode::ExactK: {
      const auto k = static_cast<std::size_t>(
          std::llround(keep_rate * static_cast<double>(num_units)));
      m.kept.assign(num_units, 0);
      const auto perm = rng.permutation(num_units);
      for (std::size_t i = 0; i < k && i < num_units; ++i) m.kept[perm[i]] = 1;
      break;
    }
    default:
      throw ConfigError("random_mask supports bernoulli and exact-k modes only");
  }
  return m;
}

namespace {

// Score ranking shared by hetero and layerwise masks: indices sorted by
// score descending, ties by ascending index.
std::vector<std::size_t> rank_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

DropoutMask window_mask(const std::vector<double>& scores, std::size_t window,
                        std::size_t capacity_level, std::size_t level_count,
                        double keep_rate, MaskMode mode) {
  const std::size_t m = scores.size();
  if (level_count < 1) throw ConfigError("window mask: level count must be >= 1");
  if (capacity_level < 1 || capacity_level > level_count)
    throw ConfigError("window mask: capacity level out of range");
  if (window > m) throw ConfigError("window mask: drop window exceeds unit count");

  DropoutMask out;
  out.keep_rate = keep_rate;
  out.mode = mode;
  out.kept.assign(m, 1);
  if (window == 0) return out;

  const std::size_t stride =
      level_count > 1 ? (m - window) / (level_count - 1) : 0;
  const std::size_t offset = (capacity_level - 1) * stride;
  const auto order = rank_by_score(scores);
  for (std::size_t i = offset; i < offset + window; ++i) out.kept[order[i]] = 0;
  return out;
}

}  // namespace

DropoutMask hetero_mask(const ScoreTable& table, std::size_t capacity_level,
                        std::size_t level_count, double keep_rate) {
  if (keep_rate <= 0.0 || keep_rate > 1.0)
    throw ConfigError("hetero_mask: keep_rate must be in (0, 1]");
  const std::size_t m = table.size();
  const auto window = static_cast<std::size_t>(
      std::llround((1.0 - keep_rate) * static_cast<double>(m)));
  if (m < window) throw ConfigError("hetero_mask: drop window exceeds unit count");
  return window_mask(table.scores, window, capacity_level, level_count,
                     keep_rate, MaskMode::ScoreWindow);
}

DropoutMask ordered_mask(std::size_t num_units, std::size_t capacity_level,
                         std::size_t level_count) {
  if (level_count < 1) throw ConfigError("ordered_mask: level count must be >= 1");
  if (capacity_level < 1 || capacity_level > level_count)
    throw ConfigError("ordered_mask: capacity level out of range");
  const auto width = static_cast<std::size_t>(std::llround(
      static_cast<double>(num_units) *
      static_cast<double>(level_count - capacity_level + 1) /
      static_cast<double>(level_count)));
  DropoutMask m;
  m.mode = MaskMode::OrderedPrefix;
  m.keep_rate = static_cast<double>(level_count - capacity_level + 1) /
                static_cast<double>(level_count);
  m.kept.assign(num_units, 0);
  for (std::size_t i = 0; i < width; ++i) m.kept[i] = 1;
  return m;
}

DropoutMask layerwise_mask(const ScoreTable& layer_scores,
                           std::size_t capacity_level, std::size_t level_count,
                           double keep_rate) {
  if (keep_rate <= 0.0 || keep_rate > 1.0)
    throw ConfigError("layerwise_mask: keep_rate must be in (0, 1]");
  const std::size_t layers = layer_scores.size();
  // ceil, so any keep_rate < 1 drops at least one layer.
  std::size_t window = 0;
  if (keep_rate < 1.0) {
    window = static_cast<std::size_t>(
        std::ceil((1.0 - keep_rate) * static_cast<double>(layers)));
  }
  if (window >= layers && keep_rate < 1.0)
    throw DegenerateMaskError(
        "layerwise mask would drop every layer of the model");
  auto m = window_mask(layer_scores.scores, window, capacity_level, level_count,
                       keep_rate, MaskMode::Layerwise);
  return m;
}

void apply_mask(ModelParams& params, const DropoutMask& mask) {
  for (auto& g : params.groups) {
    if (mask.layerwise()) {
      if (mask.kept[g.layer_id]) continue;
      std::fill(g.values.begin(), g.values.end(), 0.0);
      continue;
    }
    if (g.unit_axis == UnitAxis::None) continue;
    for (std::size_t i = 0; i < g.values.size(); ++i)
      if (!mask.kept[g.unit_of(i)]) g.values[i] = 0.0;
  }
}

std::size_t kept_value_count(const ModelParams& params, const DropoutMask& mask) {
  std::size_t n = 0;
  for (const auto& g : params.groups) {
    if (mask.layerwise()) {
      if (mask.kept[g.layer_id]) n += g.size();
      continue;
    }
    if (g.unit_axis == UnitAxis::None) {
      n += g.size();
      continue;
    }
    for (std::size_t i = 0; i < g.values.size(); ++i)
      if (mask.kept[g.unit_of(i)]) ++n;
  }
  return n;
}

MaskMomentStats mask_moment_stats(double keep_rate, std::size_t subnetworks,
                                  std::uint64_t trials, std::uint64_t seed) {
  if (trials < 10000)
    throw ConfigError("mask_moment_stats: need at least 1e4 trials");
  const double th = theta(keep_rate, subnetworks);
  (void)th;
  Rng rng(seed);
  MaskMomentStats st;
  st.trials = trials;
  // Accumulate raw moments of nu | Nperp=1 and the Nperp frequency.
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  std::uint64_t active = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::uint32_t n_r = 0, joint = 0;
    for (std::size_t s = 0; s < subnetworks; ++s) {
      const bool mr = rng.bernoulli(keep_rate);
      const bool mrp = rng.bernoulli(keep_rate);
      n_r += mr;
      joint += (mr && mrp);
    }
    if (n_r == 0) continue;
    ++active;
    const double nu = static_cast<double>(joint) / static_cast<double>(n_r);
    s1 += nu;
    s2 += nu * nu;
    s3 += nu * nu * nu;
    s4 += nu * nu * nu * nu;
  }
  st.conditioned_trials = active;
  const double n = static_cast<double>(active);
  if (active > 1) {
    const double m1 = s1 / n;
    const double m2 = s2 / n;
    const double var = m2 - m1 * m1;
    st.mean_nu = m1;
    st.var_nu = var * n / (n - 1.0);
    st.se_mean = std::sqrt(std::max(var, 0.0) / n);
    // SE of the sample variance from the fourth central moment.
    const double m3 = s3 / n;
    const double m4 = s4 / n;
    const double mu4 =
        m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1 * m1 * m1 * m1;
    st.se_var = std::sqrt(std::max(mu4 - var * var, 0.0) / n);
  }
  const double th_emp =
      static_cast<double>(active) / static_cast<double>(trials);
  st.theta_empirical = th_emp;
  st.se_theta =
      std::sqrt(th_emp * (1.0 - th_emp) / static_cast<double>(trials));
  return st;
}

}  // namespace adrop
