#include "adrop/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adrop/errors.hpp"
#include "adrop/rng.hpp"

namespace adrop {

Dataset gen_synthetic(std::size_t n, std::size_t channels, std::size_t pixels,
                      std::size_t patch_width, double label_bound,
                      std::uint64_t seed) {
  if (n < 1 || channels < 1 || pixels < 1 || patch_width < 1)
    throw ConfigError("gen_synthetic: all dimensions must be >= 1");
  if (label_bound <= 0.0)
    throw ConfigError("gen_synthetic: label bound C must be positive");

  Dataset d;
  d.channels = channels;
  d.pixels = pixels;
  d.label_bound = label_bound;
  const std::size_t dim = channels * pixels;
  const double target_norm = 1.0 / std::sqrt(static_cast<double>(patch_width));

  Rng rng(seed);
  d.inputs.reserve(n * dim);
  std::vector<double> sample(dim);
  constexpr int kMaxRejects = 1000;
  for (std::size_t i = 0; i < n; ++i) {
    int attempts = 0;
    for (;;) {
      double norm2 = 0.0;
      for (auto& v : sample) {
        v = rng.normal();
        norm2 += v * v;
      }
      const double r = target_norm / std::sqrt(norm2);
      for (auto& v : sample) v *= r;
      // Distinctness by rejection; collisions of continuous draws are
      // practically impossible but the contract wants a hard guarantee.
      bool distinct = true;
      for (std::size_t k = 0; k < i && distinct; ++k)
        distinct = std::memcmp(d.inputs.data() + k * dim, sample.data(),
                               dim * sizeof(double)) != 0;
      if (distinct) break;
      if (++attempts > kMaxRejects)
        throw NumericError("gen_synthetic: could not draw distinct samples");
    }
    d.inputs.insert(d.inputs.end(), sample.begin(), sample.end());
  }
  d.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    d.targets.push_back(rng.uniform(-label_bound, label_bound));
  return d;
}

Dataset gen_synthetic_classes(std::size_t n, std::size_t input_dim,
                              std::size_t classes, double noise,
                              std::uint64_t seed) {
  if (n < 1 || input_dim < 1 || classes < 2)
    throw ConfigError("gen_synthetic_classes: need n >= 1, dim >= 1, classes >= 2");
  Rng rng(seed);
  // Class prototypes on the unit sphere.
  std::vector<double> protos(classes * input_dim);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < input_dim; ++k) {
      const double v = rng.normal();
      protos[c * input_dim + k] = v;
      norm2 += v * v;
    }
    const double r = 1.0 / std::sqrt(norm2);
    for (std::size_t k = 0; k < input_dim; ++k) protos[c * input_dim + k] *= r;
  }

  Dataset d;
  d.channels = 1;
  d.pixels = input_dim;
  d.classes = classes;
  d.inputs.resize(n * input_dim);
  d.targets.assign(n * classes, 0.0);
  d.labels.resize(n);
  std::vector<double> x(input_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(rng.below(classes));
    double norm2 = 0.0;
    for (std::size_t k = 0; k < input_dim; ++k) {
      x[k] = protos[c * input_dim + k] + noise * rng.normal();
      norm2 += x[k] * x[k];
    }
    const double r = 1.0 / std::sqrt(norm2);
    for (std::size_t k = 0; k < input_dim; ++k)
      d.inputs[i * input_dim + k] = x[k] * r;
    d.labels[i] = static_cast<std::uint32_t>(c);
    d.targets[i * classes + c] = 1.0;
  }
  return d;
}

namespace {

// Pseudo-class of a sample for biasing: the label, or the target's quantile
// band for regression.
std::vector<std::size_t> bias_classes(const Dataset& data, std::size_t bands) {
  const std::size_t n = data.size();
  std::vector<std::size_t> cls(n);
  if (data.classes > 0) {
    for (std::size_t i = 0; i < n; ++i) cls[i] = data.labels[i];
    return cls;
  }
  // Regression: rank targets, cut into equal quantile bands.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.targets[a] < data.targets[b];
  });
  for (std::size_t rank = 0; rank < n; ++rank)
    cls[order[rank]] = std::min(bands - 1, rank * bands / n);
  return cls;
}

}  // namespace

ShardPlan partition_noniid(const Dataset& data,
                           std::span<const std::size_t> client_levels,
                           double bias_strength, std::uint64_t seed) {
  if (client_levels.empty())
    throw ConfigError("partition_noniid: no clients");
  if (bias_strength < 0.0 || bias_strength > 1.0)
    throw ConfigError("partition_noniid: bias_strength must be in [0, 1]");
  const std::size_t n = data.size();
  const std::size_t num_clients = client_levels.size();
  if (n < num_clients)
    throw ConfigError("partition_noniid: fewer samples than clients");

  std::size_t num_levels = 0;
  for (auto l : client_levels) num_levels = std::max(num_levels, l);
  const std::size_t num_classes =
      data.classes > 0 ? data.classes : std::max<std::size_t>(num_levels, 2);
  const auto cls = bias_classes(data, num_classes);

  Rng rng(seed);
  // Dominant class per level; levels beyond the class count share
  // round-robin (logged by descriptor, not an error).
  std::vector<std::size_t> dominant_of_level(num_levels);
  for (std::size_t l = 0; l < num_levels; ++l)
    dominant_of_level[l] = l % num_classes;

  // Shuffle sample order, split into per-class pools (queues).
  std::vector<std::vector<std::size_t>> pools(num_classes);
  for (auto i : rng.permutation(n)) pools[cls[i]].push_back(i);

  // Target shard sizes: as even as possible.
  std::vector<std::size_t> quota(num_clients, n / num_clients);
  for (std::size_t i = 0; i < n % num_clients; ++i) ++quota[i];

  ShardPlan plan;
  plan.shards.resize(num_clients);
  plan.dominant_for_client.resize(num_clients);
  plan.bias_descriptor.resize(num_clients);

  auto pop_from = [&](std::size_t c) -> std::size_t {
    // Fall back to the fullest pool when the preferred one is exhausted.
    if (pools[c].empty()) {
      std::size_t best = 0, best_size = 0;
      for (std::size_t k = 0; k < pools.size(); ++k)
        if (pools[k].size() > best_size) {
          best = k;
          best_size = pools[k].size();
        }
      c = best;
    }
    const std::size_t idx = pools[c].back();
    pools[c].pop_back();
    return idx;
  };
  auto pop_uniform = [&]() -> std::size_t {
    std::size_t remaining = 0;
    for (const auto& p : pools) remaining += p.size();
    std::size_t pick = static_cast<std::size_t>(rng.below(remaining));
    for (std::size_t k = 0; k < pools.size(); ++k) {
      if (pick < pools[k].size()) {
        const std::size_t idx = pools[k][pools[k].size() - 1 - pick];
        pools[k].erase(pools[k].end() - 1 - static_cast<std::ptrdiff_t>(pick));
        return idx;
      }
      pick -= pools[k].size();
    }
    throw ContractError("partition_noniid: pool accounting broke");
  };

  for (std::size_t client = 0; client < num_clients; ++client) {
    const std::size_t level = client_levels[client];
    const std::size_t dom = dominant_of_level[level - 1];
    plan.dominant_for_client[client] = dom;
    plan.bias_descriptor[client] =
        "level=" + std::to_string(level) + " dominant=" + std::to_string(dom) +
        (level - 1 >= num_classes ? " (shared round-robin)" : "");
    for (std::size_t k = 0; k < quota[client]; ++k) {
      const bool dominant_draw =
          bias_strength >= 1.0 || rng.uniform() < bias_strength;
      plan.shards[client].push_back(dominant_draw ? pop_from(dom)
                                                  : pop_uniform());
    }
    std::sort(plan.shards[client].begin(), plan.shards[client].end());
  }
  return plan;
}

namespace {

void put_u64_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint64_t get_u64_le(std::istream& is, const char* what) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError(std::string("ingest: truncated ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size())
      throw ParseError("trailing characters");
    if (!std::isfinite(v))
      throw ParseError("non-finite value");
    return v;
  } catch (const std::exception&) {
    throw ParseError("ingest: bad value at row " + std::to_string(row) +
                     ", column " + std::to_string(col) + ": '" + cell + "'");
  }
}

Dataset ingest_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("ingest: cannot open: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw ParseError("ingest: empty file: " + path);
  // Header: label,f0,f1,...
  std::stringstream hs(line);
  std::string tok;
  std::vector<std::string> header;
  while (std::getline(hs, tok, ',')) header.push_back(tok);
  if (header.empty() || header[0] != "label")
    throw ParseError("ingest: malformed header, expected 'label,f0,...'");
  const std::size_t dim = header.size() - 1;
  if (dim == 0) throw ParseError("ingest: header names no features");

  Dataset d;
  d.channels = 1;
  d.pixels = dim;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<std::string> cells;
    while (std::getline(ls, tok, ',')) cells.push_back(tok);
    if (cells.size() != dim + 1)
      throw ParseError("ingest: row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(dim + 1));
    d.targets.push_back(parse_cell(cells[0], row, 0));
    for (std::size_t c = 1; c < cells.size(); ++c)
      d.inputs.push_back(parse_cell(cells[c], row, c));
  }
  if (d.targets.empty()) throw ParseError("ingest: no data rows: " + path);
  return d;
}

Dataset ingest_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("ingest: cannot open: " + path);
  const std::uint64_t n = get_u64_le(is, "header (n)");
  const std::uint64_t dim = get_u64_le(is, "header (dim)");
  if (n == 0 || dim == 0) throw ParseError("ingest: zero-sized binary matrix");
  Dataset d;
  d.channels = 1;
  d.pixels = dim;
  d.inputs.resize(n * dim);
  for (std::uint64_t i = 0; i < n * dim; ++i) {
    const auto bits = get_u64_le(is, "matrix values");
    const double v = std::bit_cast<double>(bits);
    if (!std::isfinite(v))
      throw ParseError("ingest: non-finite value at row " +
                       std::to_string(i / dim + 1) + ", column " +
                       std::to_string(i % dim + 1));
    d.inputs[i] = v;
  }
  d.targets.resize(n);
  for (std::uint64_t i = 0; i < n; ++i)
    d.targets[i] = std::bit_cast<double>(get_u64_le(is, "labels"));
  return d;
}

}  // namespace

Dataset ingest_matrix(const std::string& path, MatrixFormat format) {
  return format == MatrixFormat::Csv ? ingest_csv(path) : ingest_binary(path);
}

void write_matrix(const std::string& path, const Dataset& data,
                  MatrixFormat format) {
  const std::size_t n = data.size();
  const std::size_t dim = data.input_dim();
  if (format == MatrixFormat::Binary) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ParseError("write_matrix: cannot open: " + path);
    put_u64_le(os, n);
    put_u64_le(os, dim);
    for (double v : data.inputs) put_u64_le(os, std::bit_cast<std::uint64_t>(v));
    for (std::size_t i = 0; i < n; ++i) {
      const double label =
          data.classes > 0 ? static_cast<double>(data.labels[i]) : data.targets[i];
      put_u64_le(os, std::bit_cast<std::uint64_t>(label));
    }
    return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("write_matrix: cannot open: " + path);
  os << "label";
  for (std::size_t k = 0; k < dim; ++k) os << ",f" << k;
  os << "\n";
  char buf[64];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, res.ptr - buf);
  };
  for (std::size_t i = 0; i < n; ++i) {
    put(data.classes > 0 ? static_cast<double>(data.labels[i]) : data.targets[i]);
    const auto x = data.input(i);
    for (std::size_t k = 0; k < dim; ++k) {
      os << ',';
      put(x[k]);
    }
    os << "\n";
  }
}

}  // namespace adrop
