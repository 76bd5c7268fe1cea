#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adrop/datagen.hpp"
#include "adrop/nn.hpp"

namespace adrop {

struct NtkMatrix {
  std::size_t n = 0;
  std::vector<double> h;  // n x n row-major, symmetric
  double lambda0 = 0.0;   // smallest eigenvalue

  double at(std::size_t i, std::size_t k) const { return h[i * n + k]; }
};

// Closed-form expectation E_w[1{<a,w> >= 0} 1{<b,w> >= 0}] for Gaussian w:
// (pi - angle(a, b)) / (2 pi). Zero vectors yield 0 contribution by
// convention (their kernel term carries a zero inner product anyway).
double activation_coexpectation(std::span<const double> a,
                                std::span<const double> b);

// Monte-Carlo estimate of the same expectation; the test oracle.
double mc_activation_coexpectation(std::span<const double> a,
                                   std::span<const double> b,
                                   std::uint64_t draws, std::uint64_t seed);

// Infinite-width kernel: H_ik = p^-2 sum_j <xhat_i^(j), xhat_k^(j)> E[1 1].
NtkMatrix ntk_infty(std::span<const PatchedInput> xs);

// Finite-width kernel at the current weights,
// H_ik = sum_r sum_{j,j'} a_rj a_rj' <xhat_i^(j), xhat_k^(j')> 1 1,
// with the paper's closed indicator 1{z >= 0} (all filters active at W = 0).
NtkMatrix finite_ntk(const CnnModel& model, const ModelParams& w,
                     std::span<const PatchedInput> xs);

// Smallest eigenvalue of a dense symmetric matrix (row-major n x n).
double smallest_eigenvalue(std::span<const double> matrix, std::size_t n);

// The one-hidden-layer theory process: S equal-speed subnetworks per step,
// Bernoulli masks, normalizer-averaged surrogate gradients, and a bounded
// delayed-gradient schedule delta_t = min(t mod (E+1), t).
struct TheoryRunConfig {
  std::size_t n = 16;
  std::size_t channels = 2;   // d-hat
  std::size_t pixels = 4;     // p
  std::size_t patch_width = 2;  // q
  std::size_t filters = 512;  // m
  double kappa = 1.0;
  double keep_rate = 0.5;     // xi
  std::size_t subnetworks = 2;  // S
  std::size_t max_staleness = 4;  // E
  double label_bound = 1.0;   // C
  double eta = 0.0;           // 0 => lambda0 / (4 n^2)
  std::size_t merges = 2000;  // T
  std::uint64_t seed = 1;
  MaskMode mask_mode = MaskMode::Bernoulli;
};

struct TheoryTrace {
  std::vector<double> losses;          // ||u_t - y||^2, length merges + 1
  std::vector<double> max_drift;       // max_r ||w_{r,t} - w_{r,0}||_2 per step
  std::vector<std::uint64_t> staleness;  // delta_t per merge
  double lambda0 = 0.0;
  double eta = 0.0;
  double theta = 0.0;
};

TheoryTrace run_theory_trace(const TheoryRunConfig& config);

// Envelope compliance: every recorded loss must sit below
// (1 - theta eta lambda0 / 4)^t * L0 + floor + slack, where floor is the
// median of the trace tail (final 10%) and slack = slack_fraction * L0.
struct EnvelopeReport {
  double floor = 0.0;
  double slack = 0.0;
  bool compliant = false;
  std::size_t violations = 0;
  std::ptrdiff_t first_violation = -1;
  double decay_ratio = 1.0;  // final / initial loss
};

EnvelopeReport envelope_check(std::span<const double> losses, double theta_v,
                              double eta, double lambda0,
                              double slack_fraction = 0.1);

// Mean ||y - u_0||^2 over fresh initializations against the
// (p^-1 + C^2) n bound, with a 3-SEM allowance.
struct InitialMseReport {
  double empirical_mean = 0.0;
  double sem = 0.0;
  double bound = 0.0;
  bool pass = false;
};

InitialMseReport initial_mse_check(const TheoryRunConfig& config,
                                   std::size_t ensembles, std::uint64_t seed);

// Max per-filter drift per recorded step; flags any step whose drift
// exceeds the configured radius.
struct DriftReport {
  std::vector<double> max_drift;
  double radius = 0.0;
  bool within_radius = true;
  std::ptrdiff_t first_excess = -1;
};

DriftReport drift_monitor(std::span<const double> max_drift_per_step,
                          double radius);

// Human-readable block for the run log plus a one-row CSV rendering.
struct TheoryReport {
  double lambda0 = 0.0;
  double eta = 0.0;
  double theta = 0.0;
  EnvelopeReport envelope;
  InitialMseReport initial_mse;
  double ntk_max_abs_error = 0.0;  // closed form vs Monte Carlo
  bool ntk_pass = false;
  bool lambda0_positive = false;
  std::string text() const;
  std::string csv_header() const;
  std::string csv_row() const;
};

}  // namespace adrop
