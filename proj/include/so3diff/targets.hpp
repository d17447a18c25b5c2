#pragma once

// Synthetic target densities on SO(3), expressed through the canonical-axis
// decomposition R = Q(a) Rz(tilt) with a = R e_z.

#include <string>
#include <vector>

#include "so3diff/sample_set.hpp"

namespace so3diff::targets {

// Checkerboard cells over (azimuth of a, cos polar angle of a, tilt).
inline constexpr int kCheckerAzimuthCells = 8;
inline constexpr int kCheckerPolarCells = 4;
inline constexpr int kCheckerTiltCells = 4;

// Stripe bands in cos(polar angle), uniform azimuth and tilt.
inline constexpr double kStripeCenters[3] = {-0.6, 0.0, 0.6};
inline constexpr double kStripeHalfWidth = 0.1;

inline constexpr double kFourGaussiansEps = 0.05;
/// Two-blob targets: IG(I, eps) and IG(Ry(kBlobSeparation), eps).
inline constexpr double kBlobEps = 0.05;
inline constexpr double kBlobSeparation = 2.0;

/// Means with canonical axes +z, -z, +x, -x.
std::vector<Rotationd> four_gaussian_means();
std::vector<Rotationd> blob_centers();

bool checkerboard_accepts(const Rotationd& r);
/// Index in 0..2 of the stripe containing the axis, or -1.
int stripe_of(const Rotationd& r);

SampleSet sample_checkerboard(int n, Rng& rng);
SampleSet sample_four_gaussians(int n, Rng& rng, double eps = kFourGaussiansEps);
SampleSet sample_three_stripes(int n, Rng& rng);
SampleSet sample_uniform_set(int n, Rng& rng);
SampleSet sample_blob(int n, const Rotationd& center, double eps, Rng& rng);
/// Equal mixture of the two blobs.
SampleSet sample_two_blobs(int n, Rng& rng);
/// Context bit b in {0, 1} (context_dim 1) selects blob b.
SampleSet sample_conditional_blobs(int n, Rng& rng);

/// Nearest blob centre (0 or 1).
int nearest_blob(const Rotationd& r);

const std::vector<std::string>& target_names();
/// Throws UnknownTarget listing the valid names.
SampleSet sample_target(const std::string& name, int n, Rng& rng);

}  // namespace so3diff::targets
