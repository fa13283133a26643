#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wsrad/common.hpp"

namespace wsrad {

/// Ordered named scalars produced by an extractor.
struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<std::string> warnings;

  std::size_t size() const { return values.size(); }

  void push(std::string name, double value) {
    names.push_back(std::move(name));
    values.push_back(value);
  }

  void append(const FeatureVector& other, const std::string& prefix = {}) {
    for (std::size_t i = 0; i < other.size(); ++i) push(prefix + other.names[i], other.values[i]);
    warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
  }

  double at(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return values[i];
    throw InvalidArgument("no feature named '" + name + "'");
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace wsrad
