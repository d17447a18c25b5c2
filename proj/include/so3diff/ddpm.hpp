#pragma once

// Denoising diffusion on SO(3). The forward chain contracts toward the
// identity by the quaternion power sqrt(1 - beta) and adds IG noise of scale
// beta; each reverse transition is an IG kernel whose mean x delta and scale
// are predicted by two networks and trained by maximum likelihood.
//
// Indexing: x_0 is data, x_{i+1} ~ IG(x_i^sqrt(1 - b_i), b_i) with
// b_i = betas[i], i = 0..N-1. The reverse kernel for x_i given x_{i+1} sees
// the features [matrix(x_{i+1}), (i + 1) / N, b_i, context].
//
// Both heads are scaled by the step's beta: the residual rotation by
// sqrt(b_i) and the kernel scale by b_i, so one network covers steps whose
// noise differs by three orders of magnitude.

#include <optional>

#include "so3diff/mlp.hpp"
#include "so3diff/sample_set.hpp"
#include "so3diff/training.hpp"

namespace so3diff::ddpm {

struct VpSchedule {
  std::vector<double> betas;

  int N() const { return static_cast<int>(betas.size()); }
  void validate() const;

  static VpSchedule linear(double beta_first = 1e-4, double beta_last = 0.1, int n = 100);
};

enum class DeltaHead : std::uint32_t { SixD = 0, AxisAngle = 1 };

inline constexpr double kEpsFloor = 1e-3;  // relative to beta

struct ReverseKernelModel {
  nn::NetParams<double> delta_net;
  nn::NetParams<double> eps_net;
  DeltaHead head = DeltaHead::SixD;
  int context_dim = 0;

  int feature_dim() const { return nn::kRotationFeatures + 2 + context_dim; }
  int head_dim() const { return head == DeltaHead::SixD ? 6 : 3; }

  static ReverseKernelModel create(const std::vector<int>& hidden, int context_dim, DeltaHead head, Rng& rng);
};

/// Decoded kernel parameters for one input.
struct Kernel {
  Rotationd delta;
  double eps;
};

/// Raw network output to residual rotation. The raw output is scaled by
/// sqrt(beta); the SixD head then adds the identity frame (e_x, e_y) so a zero
/// output decodes to I.
Rotationd decode_delta(DeltaHead head, const Eigen::Ref<const Eigen::VectorXd>& raw, double beta);
/// beta * (softplus(raw + log(e - 1)) + kEpsFloor); a zero output gives about beta.
double decode_eps(double raw, double beta);

Eigen::VectorXd features(const Rotationd& x, int step, const VpSchedule& schedule,
                         const std::optional<Eigen::VectorXd>& context = std::nullopt);

/// Kernel for x_{step - 1} given x_step, step in 1..N.
Kernel predict(const ReverseKernelModel& model, const Rotationd& x, int step, const VpSchedule& schedule,
               const std::optional<Eigen::VectorXd>& context = std::nullopt);

Rotationd forward_mean(const Rotationd& x, double beta);
Rotationd forward_step(const Rotationd& x, double beta, Rng& rng);
/// Runs the chain for `steps` transitions from x0, returning x_steps.
Rotationd simulate_forward(const Rotationd& x0, const VpSchedule& schedule, int steps, Rng& rng);

/// -log IG(x_prev; x_next delta, eps), relative to Haar.
double kernel_nll(const Rotationd& x_prev, const Rotationd& x_next, const Kernel& kernel);

/// One training pair per clean item.
struct TransitionBatch {
  std::vector<Rotationd> prev;  // x_i
  std::vector<Rotationd> next;  // x_{i+1}
  std::vector<int> index;       // i
  std::vector<double> beta;     // b_i
  Eigen::MatrixXd features;
};

TransitionBatch draw_transitions(const ReverseKernelModel& model, const SampleSet& batch, const VpSchedule& schedule,
                                 Rng& rng);

struct Grads {
  nn::NetParams<double> delta;
  nn::NetParams<double> eps;
};

struct LossAndGrads {
  double loss;
  Grads grads;
};

LossAndGrads ddpm_loss(const ReverseKernelModel& model, const TransitionBatch& tb);
LossAndGrads ddpm_loss(const ReverseKernelModel& model, const SampleSet& batch, const VpSchedule& schedule, Rng& rng);

struct OptimState {
  nn::AdamState<double> delta;
  nn::AdamState<double> eps;

  static OptimState init(const ReverseKernelModel& model, const TrainConfig& config);
  std::int64_t step() const { return delta.step; }
};

void train(ReverseKernelModel& model, OptimState& opt, const SampleSet& data, const VpSchedule& schedule,
           const TrainConfig& config, Rng& rng, const TrainHooks& hooks = {});

/// Ancestral sampling from x_N ~ IG(I, 1). `contexts` holds one column shared by
/// all samples, one column per sample, or nothing.
SampleSet sample(const ReverseKernelModel& model, const VpSchedule& schedule, int n, const Eigen::MatrixXd& contexts,
                 Rng& rng);
SampleSet sample(const ReverseKernelModel& model, const VpSchedule& schedule, int n, Rng& rng);

}  // namespace so3diff::ddpm
