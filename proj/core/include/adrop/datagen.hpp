#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adrop/nn.hpp"

namespace adrop {

// client_id -> sample index set; an exact partition of the dataset.
// Clients at the same capacity level share a bias descriptor.
struct ShardPlan {
  std::vector<std::vector<std::size_t>> shards;       // indexed by client id
  std::vector<std::size_t> dominant_for_client;       // class / quantile band
  std::vector<std::string> bias_descriptor;           // per client

  std::span<const std::size_t> shard(std::size_t client) const {
    return shards[client];
  }
};

// Regression data satisfying the normalization assumptions: Gaussian images
// rescaled to Frobenius norm exactly q^(-1/2), targets uniform in [-C, C],
// pairwise-distinct inputs enforced by rejection.
Dataset gen_synthetic(std::size_t n, std::size_t channels, std::size_t pixels,
                      std::size_t patch_width, double label_bound,
                      std::uint64_t seed);

// Classification data for the desk-scale studies: class prototypes on the
// unit sphere plus Gaussian noise, renormalized; one-hot targets.
Dataset gen_synthetic_classes(std::size_t n, std::size_t input_dim,
                              std::size_t classes, double noise,
                              std::uint64_t seed);

// Non-i.i.d. shards: each capacity level gets a dominant class (or target
// quantile band for regression); a shard draws fraction beta from its
// dominant pool and 1-beta uniformly. beta = 0 is i.i.d.
ShardPlan partition_noniid(const Dataset& data,
                           std::span<const std::size_t> client_levels,
                           double bias_strength, std::uint64_t seed);

enum class MatrixFormat : std::uint8_t { Csv, Binary };

// Flat-file ingestion. Text: "label,f0,f1,..." header then rows. Binary:
// u64 n, u64 dim, n*dim little-endian doubles row-major, then n labels as
// little-endian doubles. Parse errors name the row/column.
Dataset ingest_matrix(const std::string& path, MatrixFormat format);
void write_matrix(const std::string& path, const Dataset& data,
                  MatrixFormat format);

}  // namespace adrop
