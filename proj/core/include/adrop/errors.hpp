#pragma once

#include <stdexcept>
#include <string>

namespace adrop {

// Invalid or out-of-range configuration values (keep rates, counts, unknown keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/shape disagreement between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite arithmetic is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API contract breaches (mismatched envelopes, mixed base versions, ...).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed external input (config files, dataset files, checkpoints).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A mask that would zero out an entire model (layerwise single-layer case).
class DegenerateMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adrop
