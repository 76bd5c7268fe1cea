#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adrop {

// How a group's coordinates map onto maskable units (filters / hidden
// neurons). Row: unit r owns row r. Col: unit r owns column r. None: the
// group is not unit-maskable (it still belongs to a layer).
enum class UnitAxis : std::uint8_t { None, Row, Col };

// One named parameter tensor (rank 2 throughout: rows x cols, row-major).
struct ParamGroup {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  UnitAxis unit_axis = UnitAxis::None;
  std::size_t layer_id = 0;
  std::vector<double> values;

  std::size_t size() const { return rows * cols; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  // Number of maskable units this group spans along its axis (0 for None).
  std::size_t units() const;
  // Unit id of a flat coordinate; meaningless for UnitAxis::None.
  std::size_t unit_of(std::size_t flat) const;
};

ParamGroup make_group(std::string name, std::size_t rows, std::size_t cols,
                      UnitAxis axis, std::size_t layer_id);

// The global/local model: ordered parameter groups plus the global update
// counter. Unit-maskable groups must agree on the unit count.
struct ModelParams {
  std::vector<ParamGroup> groups;
  std::uint64_t version = 0;

  std::size_t total_values() const;
  // Units of the filter/neuron masking granularity (0 if nothing maskable).
  std::size_t unit_count() const;
  std::size_t layer_count() const;
  bool all_finite() const;
  bool same_shape(const ModelParams& other) const;

  const ParamGroup* find(const std::string& name) const;
  ParamGroup* find(const std::string& name);
};

// params -= eta * grad, elementwise over matching shapes.
void axpy_update(ModelParams& params, const ModelParams& grad, double eta);

}  // namespace adrop
