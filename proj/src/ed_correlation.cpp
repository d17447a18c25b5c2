#include "so3diff/ed_correlation.hpp"

#include <algorithm>
#include <cmath>

#include "so3diff/error.hpp"

namespace so3diff {

void OrientedPointCloud::validate() const {
  if (positions.size() != axes.size()) throw Error(ErrorCode::ShapeMismatch, "one axis per position required");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!positions[i].allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite position");
    if (std::abs(axes[i].norm() - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidArgument, "axis " + std::to_string(i) + " is not unit length");
    }
  }
}

namespace {

int cube_root(int n) {
  const int k = static_cast<int>(std::lround(std::cbrt(static_cast<double>(n))));
  if (k < 1 || k * k * k != n) throw Error(ErrorCode::InvalidArgument, "jackknife block count must be a perfect cube");
  return k;
}

}  // namespace

std::vector<std::optional<EdValue>> ed_correlation(const OrientedPointCloud& cloud, const std::vector<RadialBin>& bins,
                                                   int n_jackknife) {
  cloud.validate();
  const std::size_t n = cloud.positions.size();
  if (n < 2) throw Error(ErrorCode::InsufficientSamples, "need at least two points");
  if (bins.empty()) throw Error(ErrorCode::InvalidArgument, "no bins");
  std::vector<RadialBin> sorted = bins;
  std::sort(sorted.begin(), sorted.end(), [](const RadialBin& a, const RadialBin& b) { return a.lo < b.lo; });
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (!(sorted[k].lo > 0.0 && sorted[k].hi > sorted[k].lo)) throw Error(ErrorCode::InvalidArgument, "bins must be positive");
    if (k > 0 && sorted[k].lo < sorted[k - 1].hi) throw Error(ErrorCode::InvalidArgument, "bins must be disjoint");
  }
  const int k = cube_root(n_jackknife);

  Eigen::Vector3d lo = cloud.positions[0], hi = cloud.positions[0];
  for (const auto& p : cloud.positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::vector<int> block(n);
  for (std::size_t i = 0; i < n; ++i) {
    int idx = 0;
    for (int d = 0; d < 3; ++d) {
      const double span = hi(d) - lo(d);
      int c = span > 0.0 ? static_cast<int>((cloud.positions[i](d) - lo(d)) / span * k) : 0;
      idx = idx * k + std::clamp(c, 0, k - 1);
    }
    block[i] = idx;
  }

  const std::size_t nb = bins.size();
  const auto nblocks = static_cast<std::size_t>(n_jackknife);
  std::vector<double> sum(nb, 0.0), sum_blk(nb * nblocks, 0.0);
  std::vector<long long> count(nb, 0), count_blk(nb * nblocks, 0);
  const double r_max = sorted.back().hi;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::Vector3d d = cloud.positions[j] - cloud.positions[i];
      const double r = d.norm();
      if (!(r > 0.0) || r >= r_max) continue;
      for (std::size_t b = 0; b < nb; ++b) {
        if (r < bins[b].lo || r >= bins[b].hi) continue;
        const double c = cloud.axes[i].dot(d) / r;
        const double v = c * c;
        sum[b] += v;
        ++count[b];
        const auto bi = static_cast<std::size_t>(block[i]), bj = static_cast<std::size_t>(block[j]);
        sum_blk[b * nblocks + bi] += v;
        ++count_blk[b * nblocks + bi];
        if (bj != bi) {
          sum_blk[b * nblocks + bj] += v;
          ++count_blk[b * nblocks + bj];
        }
        break;
      }
    }
  }

  std::vector<std::optional<EdValue>> out(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    if (count[b] == 0) continue;
    const double omega = (3.0 * (sum[b] / count[b]) - 1.0) / 3.0;
    std::vector<double> reps;
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
      const long long c = count[b] - count_blk[b * nblocks + blk];
      if (c > 0) reps.push_back((3.0 * ((sum[b] - sum_blk[b * nblocks + blk]) / c) - 1.0) / 3.0);
    }
    double err = 0.0;
    if (reps.size() > 1) {
      double m = 0.0;
      for (double r : reps) m += r;
      m /= reps.size();
      for (double r : reps) err += (r - m) * (r - m);
      err = std::sqrt(err * (reps.size() - 1.0) / reps.size());
    }
    out[b] = EdValue{omega, err, count[b]};
  }
  return out;
}

}  // namespace so3diff
