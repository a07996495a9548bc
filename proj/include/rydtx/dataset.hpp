#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace rydtx {

struct DataPoint {
  double x = 0.0;
  double y = 0.0;
  double sigma = 1.0;

  friend bool operator==(const DataPoint&, const DataPoint&) = default;
};

/// (x, y, sigma) observations.
struct DataSet {
  std::vector<DataPoint> points;
  std::string label;

  std::size_t size() const noexcept { return points.size(); }

  /// Invariant violations for a fit with `n_params` free parameters.
  std::vector<std::string> violations(std::size_t n_params = 1) const {
    std::vector<std::string> v;
    const std::size_t needed = n_params == 1 ? 2 : n_params + 1;
    if (points.size() < needed)
      v.push_back("need at least " + std::to_string(needed) + " points, have " +
                  std::to_string(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) v.push_back("row " + std::to_string(i) + ": non-finite value");
      if (!(p.sigma > 0.0)) v.push_back("row " + std::to_string(i) + ": sigma must be > 0");
      if (!(p.x >= 0.0)) v.push_back("row " + std::to_string(i) + ": x must be >= 0");
    }
    return v;
  }

  friend bool operator==(const DataSet&, const DataSet&) = default;
};

}  // namespace rydtx
