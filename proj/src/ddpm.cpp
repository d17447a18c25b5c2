#include "so3diff/ddpm.hpp"

#include <cmath>
#include <random>

#include "so3diff/igso3.hpp"

namespace so3diff::ddpm {

namespace {

constexpr int kMaxResample = 10;
const double kEpsShift = std::log(std::exp(1.0) - 1.0);  // softplus(kEpsShift) = 1

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

SixD<double> sixd_from_raw(const Eigen::Ref<const Eigen::VectorXd>& raw, double scale) {
  SixD<double> s{scale * raw.head<3>(), scale * raw.segment<3>(3)};
  s.u.x() += 1.0;
  s.w.y() += 1.0;
  return s;
}

void write_features(const Rotationd& x, int step, const VpSchedule& schedule, int context_dim,
                    const double* context, Eigen::Ref<Eigen::VectorXd> out) {
  nn::write_rotation_features(x, out.head<nn::kRotationFeatures>());
  out(nn::kRotationFeatures) = static_cast<double>(step) / schedule.N();
  out(nn::kRotationFeatures + 1) = schedule.betas[static_cast<std::size_t>(step - 1)];
  for (int k = 0; k < context_dim; ++k) out(nn::kRotationFeatures + 2 + k) = context[k];
}

void check_contexts(int context_dim, const Eigen::MatrixXd& contexts, int n) {
  if (context_dim == 0) {
    if (contexts.size() != 0) throw Error(ErrorCode::ShapeMismatch, "model takes no context");
    return;
  }
  if (contexts.rows() != context_dim || (contexts.cols() != 1 && contexts.cols() != n)) {
    throw Error(ErrorCode::ShapeMismatch, "need one context or one per sample of the model's dimension");
  }
}

}  // namespace

void VpSchedule::validate() const {
  if (betas.empty()) throw Error(ErrorCode::InvalidArgument, "schedule needs at least one step");
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw Error(ErrorCode::InvalidArgument, "each beta must lie in (0, 1)");
  }
}

VpSchedule VpSchedule::linear(double beta_first, double beta_last, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "schedule needs at least one step");
  VpSchedule s;
  s.betas.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    s.betas[i] = n == 1 ? beta_last : beta_first + (beta_last - beta_first) * i / (n - 1);
  }
  s.validate();
  return s;
}

ReverseKernelModel ReverseKernelModel::create(const std::vector<int>& hidden, int context_dim, DeltaHead head,
                                              Rng& rng) {
  if (context_dim < 0) throw Error(ErrorCode::InvalidArgument, "context_dim must be >= 0");
  ReverseKernelModel m;
  m.head = head;
  m.context_dim = context_dim;
  std::vector<int> widths{m.feature_dim()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(m.head_dim());
  m.delta_net = nn::mlp_init<double>(widths, rng);
  widths.back() = 1;
  m.eps_net = nn::mlp_init<double>(widths, rng);
  return m;
}

Rotationd decode_delta(DeltaHead head, const Eigen::Ref<const Eigen::VectorXd>& raw, double beta) {
  const double scale = std::sqrt(beta);
  if (head == DeltaHead::SixD) {
    if (raw.size() != 6) throw Error(ErrorCode::ShapeMismatch, "SixD head needs 6 outputs");
    return from_sixd(sixd_from_raw(raw, scale));
  }
  if (raw.size() != 3) throw Error(ErrorCode::ShapeMismatch, "axis-angle head needs 3 outputs");
  return expm<double>(Tangentd(scale * raw));
}

double decode_eps(double raw, double beta) { return beta * (softplus(raw + kEpsShift) + kEpsFloor); }

Eigen::VectorXd features(const Rotationd& x, int step, const VpSchedule& schedule,
                         const std::optional<Eigen::VectorXd>& context) {
  if (step < 1 || step > schedule.N()) throw Error(ErrorCode::InvalidArgument, "step must be in 1..N");
  const int cd = context ? static_cast<int>(context->size()) : 0;
  Eigen::VectorXd f(nn::kRotationFeatures + 2 + cd);
  write_features(x, step, schedule, cd, context ? context->data() : nullptr, f);
  return f;
}

Kernel predict(const ReverseKernelModel& model, const Rotationd& x, int step, const VpSchedule& schedule,
               const std::optional<Eigen::VectorXd>& context) {
  const Eigen::VectorXd f = features(x, step, schedule, context);
  if (f.size() != model.feature_dim()) throw Error(ErrorCode::ShapeMismatch, "context dimension mismatch");
  const double beta = schedule.betas[static_cast<std::size_t>(step - 1)];
  return {decode_delta(model.head, nn::forward(model.delta_net, f), beta),
          decode_eps(nn::forward(model.eps_net, f)(0), beta)};
}

Rotationd forward_mean(const Rotationd& x, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorCode::InvalidArgument, "beta must lie in (0, 1)");
  return rotation_power(x, std::sqrt(1.0 - beta));
}

Rotationd forward_step(const Rotationd& x, double beta, Rng& rng) {
  return igso3::sample({forward_mean(x, beta), beta}, rng);
}

Rotationd simulate_forward(const Rotationd& x0, const VpSchedule& schedule, int steps, Rng& rng) {
  if (steps < 0 || steps > schedule.N()) throw Error(ErrorCode::InvalidArgument, "steps must be in 0..N");
  Rotationd x = x0;
  for (int i = 0; i < steps; ++i) x = forward_step(x, schedule.betas[static_cast<std::size_t>(i)], rng);
  return x;
}

double kernel_nll(const Rotationd& x_prev, const Rotationd& x_next, const Kernel& kernel) {
  return -igso3::log_density(x_prev, {x_next * kernel.delta, kernel.eps});
}

TransitionBatch draw_transitions(const ReverseKernelModel& model, const SampleSet& batch, const VpSchedule& schedule,
                                 Rng& rng) {
  if (batch.empty()) throw Error(ErrorCode::InsufficientSamples, "empty batch");
  if (batch.context_dim() != model.context_dim) throw Error(ErrorCode::ShapeMismatch, "batch context dimension mismatch");
  schedule.validate();
  const std::size_t n = batch.size();
  TransitionBatch tb;
  tb.prev.resize(n);
  tb.next.resize(n);
  tb.index.resize(n);
  tb.beta.resize(n);
  tb.features.resize(model.feature_dim(), static_cast<Eigen::Index>(n));
  std::uniform_int_distribution<int> pick(0, schedule.N() - 1);
  for (std::size_t k = 0; k < n; ++k) {
    const int i = pick(rng);
    tb.index[k] = i;
    tb.beta[k] = schedule.betas[static_cast<std::size_t>(i)];
    tb.prev[k] = simulate_forward(batch.rotations[k], schedule, i, rng);
    tb.next[k] = forward_step(tb.prev[k], schedule.betas[static_cast<std::size_t>(i)], rng);
    const auto c = static_cast<Eigen::Index>(k);
    write_features(tb.next[k], i + 1, schedule, model.context_dim,
                   model.context_dim ? batch.contexts.col(c).data() : nullptr, tb.features.col(c));
  }
  return tb;
}

LossAndGrads ddpm_loss(const ReverseKernelModel& model, const TransitionBatch& tb) {
  const auto n = static_cast<Eigen::Index>(tb.prev.size());
  if (n == 0) throw Error(ErrorCode::InsufficientSamples, "empty batch");
  nn::Tape<double> tape_d, tape_e;
  const Eigen::MatrixXd raw_d = nn::forward_batch(model.delta_net, tb.features, &tape_d);
  const Eigen::MatrixXd raw_e = nn::forward_batch(model.eps_net, tb.features, &tape_e);
  Eigen::MatrixXd up_d(raw_d.rows(), n);
  Eigen::MatrixXd up_e(1, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double beta = tb.beta[ku], scale = std::sqrt(beta);
    const Kernel kern{decode_delta(model.head, raw_d.col(k), beta), decode_eps(raw_e(0, k), beta)};
    loss += kernel_nll(tb.prev[ku], tb.next[ku], kern);

    // cos(omega) = (tr(delta^T A) - 1) / 2 with A = next^T prev.
    const Eigen::Matrix3d a = tb.next[ku].matrix().transpose() * tb.prev[ku].matrix();
    const double omega = rotation_angle(Rotationd::from_matrix_unchecked(kern.delta.matrix().transpose() * a));
    const Eigen::Matrix3d g = 0.5 * igso3::dlog_f_domega_over_sin(omega, kern.eps) * inv_n * a;
    if (model.head == DeltaHead::SixD) {
      const SixD<double> s = from_sixd_backward(sixd_from_raw(raw_d.col(k), scale), g);
      up_d.col(k).head<3>() = scale * s.u;
      up_d.col(k).tail<3>() = scale * s.w;
    } else {
      const Eigen::Matrix3d m = kern.delta.matrix().transpose() * g;
      const Eigen::Vector3d w(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
      up_d.col(k) = scale * (right_jacobian<double>(Tangentd(scale * raw_d.col(k))).transpose() * w);
    }
    up_e(0, k) = -igso3::dlog_f_deps(omega, kern.eps) * beta * sigmoid(raw_e(0, k) + kEpsShift) * inv_n;
  }
  return {loss * inv_n,
          {nn::backward_batch(model.delta_net, tape_d, up_d).grads, nn::backward_batch(model.eps_net, tape_e, up_e).grads}};
}

LossAndGrads ddpm_loss(const ReverseKernelModel& model, const SampleSet& batch, const VpSchedule& schedule, Rng& rng) {
  for (int attempt = 0;; ++attempt) {
    try {
      return ddpm_loss(model, draw_transitions(model, batch, schedule, rng));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NonPositiveDensity || attempt + 1 >= kMaxResample) throw;
    }
  }
}

OptimState OptimState::init(const ReverseKernelModel& model, const TrainConfig& config) {
  return {nn::adam_init(model.delta_net, config.lr, config.beta1, config.beta2, config.adam_eps),
          nn::adam_init(model.eps_net, config.lr, config.beta1, config.beta2, config.adam_eps)};
}

void train(ReverseKernelModel& model, OptimState& opt, const SampleSet& data, const VpSchedule& schedule,
           const TrainConfig& config, Rng& rng, const TrainHooks& hooks) {
  if (config.iterations < 0 || config.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "bad training config");
  if (data.context_dim() != model.context_dim) throw Error(ErrorCode::ShapeMismatch, "dataset context dimension mismatch");
  schedule.validate();
  for (auto* s : {&opt.delta, &opt.eps}) {
    s->beta1 = config.beta1;
    s->beta2 = config.beta2;
    s->epsilon = config.adam_eps;
  }
  double window = 0.0;
  int in_window = 0;
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    const SampleSet batch = draw_batch(data, config.batch_size, rng);
    const LossAndGrads lg = ddpm_loss(model, batch, schedule, rng);
    if (!std::isfinite(lg.loss) || !lg.grads.delta.all_finite() || !lg.grads.eps.all_finite()) {
      throw Error(ErrorCode::NonFiniteLoss, "non-finite DDPM loss at step " + std::to_string(opt.step() + 1));
    }
    opt.delta.lr = opt.eps.lr = config.lr_at(it);
    nn::adam_step(model.delta_net, lg.grads.delta, opt.delta);
    nn::adam_step(model.eps_net, lg.grads.eps, opt.eps);
    window += lg.loss;
    ++in_window;
    const std::int64_t step = opt.step();
    if (config.log_every > 0 && step % config.log_every == 0) {
      if (hooks.on_log) hooks.on_log(step, window / in_window);
      window = 0.0;
      in_window = 0;
    }
    if (config.ckpt_every > 0 && step % config.ckpt_every == 0 && hooks.on_checkpoint) hooks.on_checkpoint(step);
  }
}

SampleSet sample(const ReverseKernelModel& model, const VpSchedule& schedule, int n, const Eigen::MatrixXd& contexts,
                 Rng& rng) {
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 0");
  schedule.validate();
  check_contexts(model.context_dim, contexts, n);
  SampleSet out;
  out.rotations.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out.rotations.push_back(igso3::sample({Rotationd::identity(), 1.0}, rng));
  Eigen::MatrixXd feats(model.feature_dim(), n);
  for (int step = schedule.N(); step >= 1 && n > 0; --step) {
    for (int k = 0; k < n; ++k) {
      const double* ctx = model.context_dim ? contexts.col(contexts.cols() == 1 ? 0 : k).data() : nullptr;
      write_features(out.rotations[static_cast<std::size_t>(k)], step, schedule, model.context_dim, ctx, feats.col(k));
    }
    const Eigen::MatrixXd raw_d = nn::forward_batch(model.delta_net, feats);
    const Eigen::MatrixXd raw_e = nn::forward_batch(model.eps_net, feats);
    const double beta = schedule.betas[static_cast<std::size_t>(step - 1)];
    for (int k = 0; k < n; ++k) {
      auto& x = out.rotations[static_cast<std::size_t>(k)];
      const Rotationd mu = x * decode_delta(model.head, raw_d.col(k), beta);
      x = igso3::sample({mu, decode_eps(raw_e(0, k), beta)}, rng);
    }
  }
  if (model.context_dim > 0) {
    out.contexts = contexts.cols() == 1 ? Eigen::MatrixXd(contexts.replicate(1, n)) : contexts;
  }
  return out;
}

SampleSet sample(const ReverseKernelModel& model, const VpSchedule& schedule, int n, Rng& rng) {
  return sample(model, schedule, n, Eigen::MatrixXd(), rng);
}

}  // namespace so3diff::ddpm
