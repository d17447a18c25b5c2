#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>

namespace so3diff {

/// Optimisation constants shared by both model families. Defaults follow the
/// reference setup (Adam, lr 1e-4, betas 0.90 / 0.95, batch 1024).
struct TrainConfig {
  std::int64_t iterations = 1000;
  int batch_size = 1024;
  double lr = 1e-4;
  /// Cosine decay from lr to lr_final over the run; equal values keep lr fixed.
  double lr_final = 1e-4;
  double beta1 = 0.90;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  int log_every = 100;
  int ckpt_every = 0;

  double lr_at(std::int64_t step) const {
    if (iterations <= 1 || lr_final == lr) return lr;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(iterations - 1));
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(std::numbers::pi * frac));
  }
};

struct TrainHooks {
  /// Mean loss over the last log window, reported with the global step.
  std::function<void(std::int64_t step, double loss)> on_log;
  std::function<void(std::int64_t step)> on_checkpoint;
};

}  // namespace so3diff
