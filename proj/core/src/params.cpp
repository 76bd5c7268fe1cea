#include "adrop/params.hpp"

#include <cmath>

#include "adrop/errors.hpp"

namespace adrop {

std::size_t ParamGroup::units() const {
  switch (unit_axis) {
    case UnitAxis::Row:
      return rows;
    case UnitAxis::Col:
      return cols;
    case UnitAxis::None:
      return 0;
  }
  return 0;
}

std::size_t ParamGroup::unit_of(std::size_t flat) const {
  return unit_axis == UnitAxis::Col ? flat % cols : flat / cols;
}

ParamGroup make_group(std::string name, std::size_t rows, std::size_t cols,
                      UnitAxis axis, std::size_t layer_id) {
  ParamGroup g;
  g.name = std::move(name);
  g.rows = rows;
  g.cols = cols;
  g.unit_axis = axis;
  g.layer_id = layer_id;
  g.values.assign(rows * cols, 0.0);
  return g;
}

std::size_t ModelParams::total_values() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

std::size_t ModelParams::unit_count() const {
  std::size_t units = 0;
  for (const auto& g : groups) {
    const std::size_t u = g.units();
    if (u == 0) continue;
    if (units == 0) {
      units = u;
    } else if (units != u) {
      throw DimensionError("parameter groups disagree on maskable unit count");
    }
  }
  return units;
}

std::size_t ModelParams::layer_count() const {
  std::size_t layers = 0;
  for (const auto& g : groups) layers = std::max(layers, g.layer_id + 1);
  return layers;
}

bool ModelParams::all_finite() const {
  for (const auto& g : groups)
    for (double v : g.values)
      if (!std::isfinite(v)) return false;
  return true;
}

bool ModelParams::same_shape(const ModelParams& other) const {
  if (groups.size() != other.groups.size()) return false;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].rows != other.groups[i].rows ||
        groups[i].cols != other.groups[i].cols)
      return false;
  }
  return true;
}

const ParamGroup* ModelParams::find(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

ParamGroup* ModelParams::find(const std::string& name) {
  for (auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

void axpy_update(ModelParams& params, const ModelParams& grad, double eta) {
  if (!params.same_shape(grad))
    throw DimensionError("axpy_update: shape mismatch between params and grad");
  for (std::size_t gi = 0; gi < params.groups.size(); ++gi) {
    auto& dst = params.groups[gi].values;
    const auto& src = grad.groups[gi].values;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= eta * src[i];
  }
}

}  // namespace adrop
