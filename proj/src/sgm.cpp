#include "so3diff/sgm.hpp"

#include <cmath>
#include <random>

#include "so3diff/igso3.hpp"

namespace so3diff::sgm {

namespace {

constexpr int kMaxResample = 10;
constexpr double kDivergenceStep = 1e-4;

void check_context(const ScoreModel& model, const Eigen::MatrixXd& contexts, std::size_t n) {
  if (model.context_dim == 0) {
    if (contexts.size() != 0) throw Error(ErrorCode::ShapeMismatch, "model takes no context");
    return;
  }
  if (contexts.rows() != model.context_dim) throw Error(ErrorCode::ShapeMismatch, "context dimension mismatch");
  if (contexts.cols() != 1 && contexts.cols() != static_cast<Eigen::Index>(n)) {
    throw Error(ErrorCode::ShapeMismatch, "need one context or one per sample");
  }
}

void fill_features(const ScoreModel& model, std::span<const Rotationd> xs, double eps, const Eigen::MatrixXd& contexts,
                   Eigen::MatrixXd& features) {
  features.resize(model.feature_dim(), static_cast<Eigen::Index>(xs.size()));
  const double log_eps = std::log(eps);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    nn::write_rotation_features(xs[i], features.col(c).head<nn::kRotationFeatures>());
    features(nn::kRotationFeatures, c) = log_eps;
    if (model.context_dim > 0) {
      features.col(c).tail(model.context_dim) = contexts.col(contexts.cols() == 1 ? 0 : c);
    }
  }
}

}  // namespace

void VeSchedule::validate() const {
  if (!(T > 0.0) || !(eps_min > 0.0) || !(eps_min < T) || !(sigma_eps > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "schedule needs 0 < eps_min < T and sigma_eps > 0");
  }
}

double VeSchedule::draw_eps(Rng& rng) const {
  if (draw == NoiseDraw::LogUniform) {
    std::uniform_real_distribution<double> u(std::log(eps_min), std::log(T));
    return std::clamp(std::exp(u(rng)), eps_min, T);
  }
  std::normal_distribution<double> normal(0.0, sigma_eps);
  return std::clamp(std::abs(normal(rng)), eps_min, T);
}

ScoreModel ScoreModel::create(const std::vector<int>& hidden, int context_dim, const VeSchedule& schedule, Rng& rng) {
  if (context_dim < 0) throw Error(ErrorCode::InvalidArgument, "context_dim must be >= 0");
  schedule.validate();
  std::vector<int> widths{nn::kRotationFeatures + 1 + context_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(3);
  return {nn::mlp_init<double>(widths, rng), schedule, context_dim};
}

NoisedBatch draw_noised_batch(const ScoreModel& model, const SampleSet& batch, Rng& rng) {
  if (batch.empty()) throw Error(ErrorCode::InsufficientSamples, "empty batch");
  if (batch.context_dim() != model.context_dim) throw Error(ErrorCode::ShapeMismatch, "batch context dimension mismatch");
  const auto& sch = model.schedule;
  const std::size_t n = batch.size();
  NoisedBatch nb;
  nb.clean = batch.rotations;
  nb.noised.resize(n);
  nb.eps.resize(static_cast<Eigen::Index>(n));
  nb.targets.resize(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double e = igso3::quantize_eps(sch.draw_eps(rng));
    const igso3::IGParams params{batch.rotations[i], e};
    for (int attempt = 0;; ++attempt) {
      const Rotationd xt = igso3::sample(params, rng);
      try {
        nb.targets.col(static_cast<Eigen::Index>(i)) = igso3::score(xt, params);
        nb.noised[i] = xt;
        break;
      } catch (const Error& err) {
        if (err.code() != ErrorCode::NearCutLocus || attempt + 1 >= kMaxResample) throw;
      }
    }
    nb.eps(static_cast<Eigen::Index>(i)) = e;
  }
  nb.features.resize(model.feature_dim(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    nn::write_rotation_features(nb.noised[i], nb.features.col(c).head<nn::kRotationFeatures>());
    nb.features(nn::kRotationFeatures, c) = std::log(nb.eps(c));
    if (model.context_dim > 0) nb.features.col(c).tail(model.context_dim) = batch.contexts.col(c);
  }
  return nb;
}

double dsm_loss_value(const NoisedBatch& nb, const Eigen::Matrix3Xd& predictions) {
  if (predictions.cols() != nb.targets.cols()) throw Error(ErrorCode::ShapeMismatch, "prediction count mismatch");
  const Eigen::RowVectorXd sq = (predictions - nb.targets).colwise().squaredNorm();
  return sq.cwiseProduct(nb.eps.transpose()).sum() / static_cast<double>(nb.targets.cols());
}

LossAndGrads dsm_loss(const ScoreModel& model, const NoisedBatch& nb) {
  nn::Tape<double> tape;
  const Eigen::MatrixXd out = nn::forward_batch(model.net, nb.features, &tape);
  const Eigen::VectorXd root = nb.eps.cwiseSqrt();
  const Eigen::Matrix3Xd pred = out * root.cwiseInverse().asDiagonal();
  const double loss = dsm_loss_value(nb, pred);
  // e |out / sqrt(e) - t|^2 = |out - sqrt(e) t|^2
  const double scale = 2.0 / static_cast<double>(pred.cols());
  const Eigen::MatrixXd upstream = (out - nb.targets * root.asDiagonal()) * scale;
  return {loss, nn::backward_batch(model.net, tape, upstream).grads};
}

LossAndGrads dsm_loss(const ScoreModel& model, const SampleSet& batch, Rng& rng) {
  return dsm_loss(model, draw_noised_batch(model, batch, rng));
}

void train(ScoreModel& model, nn::AdamState<double>& adam, const SampleSet& data, const TrainConfig& config,
           Rng& rng, const TrainHooks& hooks) {
  if (config.iterations < 0 || config.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "bad training config");
  if (data.context_dim() != model.context_dim) throw Error(ErrorCode::ShapeMismatch, "dataset context dimension mismatch");
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;
  adam.epsilon = config.adam_eps;
  double window = 0.0;
  int in_window = 0;
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    const SampleSet batch = draw_batch(data, config.batch_size, rng);
    const LossAndGrads lg = dsm_loss(model, batch, rng);
    if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
      throw Error(ErrorCode::NonFiniteLoss, "non-finite DSM loss at step " + std::to_string(adam.step + 1));
    }
    adam.lr = config.lr_at(it);
    nn::adam_step(model.net, lg.grads, adam);
    window += lg.loss;
    ++in_window;
    if (config.log_every > 0 && adam.step % config.log_every == 0) {
      if (hooks.on_log) hooks.on_log(adam.step, window / in_window);
      window = 0.0;
      in_window = 0;
    }
    if (config.ckpt_every > 0 && adam.step % config.ckpt_every == 0 && hooks.on_checkpoint) hooks.on_checkpoint(adam.step);
  }
}

void predict_scores(const ScoreModel& model, std::span<const Rotationd> xs, double eps,
                    const Eigen::MatrixXd& contexts, Eigen::Matrix3Xd& out) {
  check_context(model, contexts, xs.size());
  Eigen::MatrixXd features;
  fill_features(model, xs, eps, contexts, features);
  out = nn::forward_batch(model.net, features) / std::sqrt(eps);
}

TimeGrid sampling_grid(const VeSchedule& schedule, int n_steps) {
  schedule.validate();
  return TimeGrid::geometric(schedule.T, schedule.eps_min, n_steps);
}

SampleSet sample(const ScoreModel& model, const Eigen::MatrixXd& contexts, int n, int n_steps, Rng& rng) {
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 0");
  check_context(model, contexts, static_cast<std::size_t>(n));
  SampleSet out;
  out.rotations.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.rotations.push_back(sample_uniform<double>(rng));
  const TimeGrid grid = sampling_grid(model.schedule, n_steps);
  const auto& sch = model.schedule;
  Eigen::Matrix3Xd s;
  auto field = [&](std::span<const Rotationd> xs, double t, std::vector<Tangentd>& k) {
    predict_scores(model, xs, sch.eps(t), contexts, s);
    const double rate = -sch.deps_dt(t);
    for (std::size_t i = 0; i < xs.size(); ++i) k[i] = xs[i] * Tangentd(rate * s.col(static_cast<Eigen::Index>(i)));
  };
  if (n > 0) heun_integrate_batch(field, out.rotations, grid);
  if (model.context_dim > 0) {
    out.contexts = contexts.cols() == 1 ? Eigen::MatrixXd(contexts.replicate(1, n)) : contexts;
  }
  return out;
}

SampleSet sample(const ScoreModel& model, int n, const std::optional<Eigen::VectorXd>& context, int n_steps,
                 Rng& rng) {
  Eigen::MatrixXd ctx;
  if (context) ctx = *context;
  return sample(model, ctx, n, n_steps, rng);
}

std::vector<Rotationd> flow_to_data(const ScoreFn& score, const VeSchedule& schedule, std::vector<Rotationd> xs,
                                    int n_steps) {
  const TimeGrid grid = sampling_grid(schedule, n_steps);
  auto field = [&](std::span<const Rotationd> ys, double t, std::vector<Tangentd>& k) {
    const double eps = schedule.eps(t);
    const double rate = -schedule.deps_dt(t);
    for (std::size_t i = 0; i < ys.size(); ++i) k[i] = ys[i] * Tangentd(rate * score(ys[i], eps));
  };
  heun_integrate_batch(field, xs, grid);
  return xs;
}

namespace {

// Right-trivialised drift and its divergence with respect to Haar measure.
// The left-invariant fields X_i are divergence-free, so div(sum v_i X_i) =
// sum X_i v_i.
struct DriftEval {
  Tangentd drift;
  double divergence;
};

using BatchScore = std::function<void(std::span<const Rotationd>, double eps, Eigen::Matrix3Xd& out)>;

DriftEval drift_and_divergence(const BatchScore& score, const VeSchedule& sch, const Rotationd& x, double t) {
  std::vector<Rotationd> pts{x};
  for (int i = 0; i < 3; ++i) {
    const Tangentd e = Tangentd::Unit(i) * kDivergenceStep;
    pts.push_back(x * expm<double>(e));
    pts.push_back(x * expm<double>(Tangentd(-e)));
  }
  Eigen::Matrix3Xd s;
  score(pts, sch.eps(t), s);
  const double rate = -sch.deps_dt(t);
  double div = 0.0;
  for (int i = 0; i < 3; ++i) div += (s(i, 1 + 2 * i) - s(i, 2 + 2 * i)) / (2.0 * kDivergenceStep);
  return {rate * s.col(0), rate * div};
}

double integrate_likelihood(const BatchScore& score, const VeSchedule& sch, const Rotationd& x0, int n_steps) {
  sch.validate();
  const TimeGrid grid = TimeGrid::geometric(sch.eps_min, sch.T, n_steps);
  Rotationd x = x0;
  double accumulated = 0.0;
  for (int n = 0; n < grid.n_steps(); ++n) {
    const double t = grid[n];
    const double h = grid[n + 1] - t;
    const DriftEval a = drift_and_divergence(score, sch, x, t);
    if (!a.drift.allFinite()) throw Error(ErrorCode::NonFiniteField, "non-finite drift");
    const Rotationd mid = x * expm<double>(Tangentd(0.5 * h * a.drift));
    const DriftEval b = drift_and_divergence(score, sch, mid, t + 0.5 * h);
    if (!b.drift.allFinite() || !std::isfinite(b.divergence)) throw Error(ErrorCode::NonFiniteField, "non-finite drift");
    const Tangentd y = h * b.drift;
    if (y.norm() > std::numbers::pi) throw Error(ErrorCode::StepTooLarge, "increment crosses the cut locus; reduce h");
    x = x * expm<double>(y);
    accumulated += h * b.divergence;
  }
  // p_T is taken as Haar-uniform, whose log density is 0.
  return accumulated;
}

}  // namespace

double log_likelihood(const ScoreModel& model, const Rotationd& x, int n_steps,
                      const std::optional<Eigen::VectorXd>& context) {
  Eigen::MatrixXd ctx;
  if (context) ctx = *context;
  check_context(model, ctx, 1);
  BatchScore score = [&](std::span<const Rotationd> xs, double eps, Eigen::Matrix3Xd& out) {
    predict_scores(model, xs, eps, ctx, out);
  };
  return integrate_likelihood(score, model.schedule, x, n_steps);
}

double log_likelihood(const ScoreFn& fn, const VeSchedule& schedule, const Rotationd& x, int n_steps) {
  BatchScore score = [&](std::span<const Rotationd> xs, double eps, Eigen::Matrix3Xd& out) {
    out.resize(3, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = fn(xs[i], eps);
  };
  return integrate_likelihood(score, schedule, x, n_steps);
}

}  // namespace so3diff::sgm
