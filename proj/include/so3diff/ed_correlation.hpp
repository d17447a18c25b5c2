#pragma once

// Ellipticity-direction correlation w(r) = <|e(x) . r_hat|^2> - 1/3 over
// ordered pairs binned by separation, with delete-one-block jackknife errors.

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace so3diff {

struct OrientedPointCloud {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> axes;

  /// Throws ShapeMismatch or InvalidArgument (non-unit axis beyond 1e-9).
  void validate() const;
};

struct RadialBin {
  double lo;
  double hi;
};

struct EdValue {
  double omega;
  double err;
  long long pairs;
};

inline constexpr int kDefaultJackknifeBlocks = 8;

/// One entry per bin; empty bins give nullopt. Jackknife blocks are the k^3
/// cells of the bounding box, so n_jackknife must be a perfect cube (8 gives
/// octants).
std::vector<std::optional<EdValue>> ed_correlation(const OrientedPointCloud& cloud, const std::vector<RadialBin>& bins,
                                                   int n_jackknife = kDefaultJackknifeBlocks);

}  // namespace so3diff
