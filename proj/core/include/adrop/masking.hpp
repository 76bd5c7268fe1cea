#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adrop/params.hpp"

namespace adrop {

enum class MaskMode : std::uint8_t {
  Bernoulli,      // keep each unit independently with probability xi
  ExactK,         // keep exactly round(xi * m) units
  ScoreWindow,    // hetero: drop a score-ranked window per capacity level
  OrderedPrefix,  // keep a fixed prefix, nested across levels
  Layerwise,      // units are whole layers
};

const char* to_string(MaskMode mode);

// Per-unit keep indicators. Granularity is filters/neurons for every mode
// except Layerwise, where an entry is a whole layer.
struct DropoutMask {
  std::vector<std::uint8_t> kept;
  double keep_rate = 1.0;
  MaskMode mode = MaskMode::ExactK;

  std::size_t unit_count() const { return kept.size(); }
  std::size_t kept_count() const;
  bool all_kept() const { return kept_count() == kept.size(); }
  bool layerwise() const { return mode == MaskMode::Layerwise; }
  DropoutMask complement() const;
  // True when the coordinate belongs to a kept unit under this mask.
  bool keeps_coord(const ParamGroup& g, std::size_t flat) const;
};

DropoutMask full_mask(std::size_t num_units);

// Per-group update-magnitude scores v(W^j) = ||W^j - W0^j||_1, measured
// against the stored initialization snapshot.
struct ScoreTable {
  std::vector<double> scores;
  ModelParams baseline;
  bool layer_granularity = false;

  std::size_t size() const { return scores.size(); }
};

ScoreTable make_score_table(const ModelParams& baseline, bool layer_granularity);

// Recompute every score against the table's stored baseline.
void update_scores(ScoreTable& table, const ModelParams& current);

// Probability a unit is active in at least one of S simultaneous
// subnetworks: 1 - (1 - xi)^S.
double theta(double keep_rate, std::size_t subnetworks);

// Seeded random mask. Bernoulli or ExactK only; other modes have their own
// constructors below.
DropoutMask random_mask(std::size_t num_units, double keep_rate, MaskMode mode,
                        std::uint64_t seed);

// Hetero mask: rank units by score descending (ties by ascending index);
// capacity level c in 1..L drops the w = round((1-xi)*m) window starting at
// (c-1) * floor((m-w)/(L-1)). Fastest level drops the top-score window.
DropoutMask hetero_mask(const ScoreTable& table, std::size_t capacity_level,
                        std::size_t level_count, double keep_rate);

// FjORD-style nested prefix: level c keeps the first round(m*(L-c+1)/L) units.
DropoutMask ordered_mask(std::size_t num_units, std::size_t capacity_level,
                         std::size_t level_count);

// Layerwise variant of hetero_mask over layer scores. Drops
// ceil((1-xi)*layers) layers; throws DegenerateMaskError when that would be
// every layer.
DropoutMask layerwise_mask(const ScoreTable& layer_scores,
                           std::size_t capacity_level, std::size_t level_count,
                           double keep_rate);

// Zero the dropped units' coordinates in-place (the submodel projection
// W ⊙ M).
void apply_mask(ModelParams& params, const DropoutMask& mask);

// Parameter count of the kept units (what a submodel actually transfers).
std::size_t kept_value_count(const ModelParams& params, const DropoutMask& mask);

// Monte-Carlo moments of nu_{r,r'} = (Nperp/N) * sum_s m_r m_r' for a unit
// pair under S independent Bernoulli(xi) masks, conditioned on Nperp = 1.
struct MaskMomentStats {
  double mean_nu = 0.0;       // conditioned on Nperp = 1, off-diagonal pair
  double var_nu = 0.0;        // same conditioning
  double theta_empirical = 0.0;
  double se_mean = 0.0;       // sample standard errors
  double se_var = 0.0;
  double se_theta = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t conditioned_trials = 0;
};

MaskMomentStats mask_moment_stats(double keep_rate, std::size_t subnetworks,
                                  std::uint64_t trials, std::uint64_t seed);

}  // namespace adrop
