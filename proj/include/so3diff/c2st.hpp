#pragma once

// Classifier two-sample test: held-out accuracy of a small network trained to
// tell two sample sets apart (0.5 when indistinguishable).

#include "so3diff/sample_set.hpp"

namespace so3diff {

struct C2stConfig {
  std::vector<int> hidden{64, 64};
  int steps = 10000;
  int batch_size = 256;
  double lr = 3e-3;
  double lr_final = 1e-4;
};

struct C2stResult {
  double score;
  double std;
  int per_side;  // samples used from each set
};

inline constexpr int kC2stMinSamples = 500;

/// Balances the sets by random subsampling to the smaller size, then runs
/// k-fold cross-validation. Throws InsufficientSamples below kC2stMinSamples.
C2stResult c2st(const SampleSet& a, const SampleSet& b, int k_folds, Rng& rng, const C2stConfig& config = {});

}  // namespace so3diff
