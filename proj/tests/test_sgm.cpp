#include <doctest.h>

#include "helpers.hpp"
#include "so3diff/igso3.hpp"
#include "so3diff/sgm.hpp"
#include "so3diff/targets.hpp"

using namespace testing;
namespace ig = so3diff::igso3;

namespace {

SampleSet constant_set(const Rotationd& r, int n) {
  SampleSet s;
  s.rotations.assign(static_cast<std::size_t>(n), r);
  return s;
}

// Exact score of an equal mixture of IG(mu_k, base + eps).
Tangentd mixture_score(const std::vector<Rotationd>& mus, double base, const Rotationd& x, double eps) {
  std::vector<double> logs;
  double top = -1e300;
  for (const auto& m : mus) {
    logs.push_back(ig::log_density(x, {m, base + eps}));
    top = std::max(top, logs.back());
  }
  double z = 0.0;
  Tangentd s = Tangentd::Zero();
  for (std::size_t k = 0; k < mus.size(); ++k) {
    const double w = std::exp(logs[k] - top);
    z += w;
    // The score of one component vanishes on its cut locus, where ig::score refuses.
    if (geodesic_angle(mus[k], x) < kPi - ig::kCutLocusMargin) s += w * ig::score(x, {mus[k], base + eps});
  }
  return s / z;
}

sgm::ScoreModel zero_model(int context_dim = 0) {
  Rng rng(0);
  auto m = sgm::ScoreModel::create({16}, context_dim, {}, rng);
  m.net *= 0.0;
  return m;
}

}  // namespace

TEST_CASE("DSM loss with the exact score vanishes for a point mass") {
  Rng rng(1);
  Rng init(2);
  const auto model = sgm::ScoreModel::create({16}, 0, {}, init);
  const Rotationd mu = expm<double>(Tangentd(0.3, -1.0, 0.2));
  const auto nb = sgm::draw_noised_batch(model, constant_set(mu, 512), rng);
  Eigen::Matrix3Xd oracle(3, nb.noised.size());
  for (std::size_t i = 0; i < nb.noised.size(); ++i) {
    oracle.col(static_cast<Eigen::Index>(i)) = ig::score(nb.noised[i], {mu, nb.eps(static_cast<Eigen::Index>(i))});
  }
  CHECK(sgm::dsm_loss_value(nb, oracle) < 1e-20);
  for (Eigen::Index i = 0; i < nb.eps.size(); ++i) {
    CHECK(nb.eps(i) >= model.schedule.eps_min * (1 - 1e-3));
    CHECK(nb.eps(i) <= model.schedule.T * (1 + 1e-3));
    CHECK(nb.eps(i) == ig::quantize_eps(nb.eps(i)));
  }
}

TEST_CASE("noise level draws") {
  Rng rng(9);
  sgm::VeSchedule sch;
  std::vector<double> logs, half;
  for (int i = 0; i < 20000; ++i) logs.push_back(std::log(sch.draw_eps(rng)));
  const double lo = std::log(sch.eps_min), hi = std::log(sch.T);
  CHECK(stats::ks_1samp(logs, [=](double v) { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); }).p_value > 0.01);
  sch.draw = sgm::NoiseDraw::HalfNormal;
  for (int i = 0; i < 20000; ++i) half.push_back(sch.draw_eps(rng));
  CHECK(stats::ks_1samp(half, [&](double v) { return 2 * stats::normal_cdf(v, 0.0, sch.sigma_eps) - 1; }).p_value > 0.01);
}

TEST_CASE("DSM gradients match finite differences") {
  Rng init(3);
  auto model = sgm::ScoreModel::create({8, 8}, 1, {}, init);
  Rng rng(4);
  SampleSet batch = targets::sample_conditional_blobs(6, rng);
  const auto nb = sgm::draw_noised_batch(model, batch, rng);
  const auto lg = sgm::dsm_loss(model, nb);
  const double h = 1e-6;
  for (std::size_t l = 0; l < model.net.n_layers(); ++l) {
    for (Eigen::Index i = 0; i < model.net.weights[l].size(); i += 7) {
      auto p = model, m = model;
      p.net.weights[l].data()[i] += h;
      m.net.weights[l].data()[i] -= h;
      const double fd = (sgm::dsm_loss(p, nb).loss - sgm::dsm_loss(m, nb).loss) / (2 * h);
      CHECK(std::abs(lg.grads.weights[l].data()[i] - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("DSM loss is reproducible and training is deterministic") {
  Rng init(5);
  const auto model = sgm::ScoreModel::create({16}, 0, {}, init);
  const SampleSet one = constant_set(Rotationd::identity(), 1);
  Rng a(9), b(9);
  const auto la = sgm::dsm_loss(model, one, a), lb = sgm::dsm_loss(model, one, b);
  CHECK(la.loss == lb.loss);
  CHECK(la.grads == lb.grads);

  TrainConfig cfg;
  cfg.iterations = 0;
  auto m0 = model;
  auto adam = nn::adam_init(m0.net);
  sgm::train(m0, adam, one, cfg, a);
  CHECK(m0.net == model.net);
  CHECK(adam.step == 0);

  cfg.iterations = 20;
  cfg.batch_size = 16;
  auto m1 = model, m2 = model;
  auto s1 = nn::adam_init(m1.net), s2 = nn::adam_init(m2.net);
  Rng r1(11), r2(11);
  sgm::train(m1, s1, one, cfg, r1);
  sgm::train(m2, s2, one, cfg, r2);
  CHECK(m1.net == m2.net);
  CHECK(s1.step == 20);
}

TEST_CASE("training on a point mass") {
  const Rotationd mu = Rotationd::identity();
  const SampleSet data = constant_set(mu, 1);
  TrainConfig cfg;
  cfg.iterations = 3000;
  cfg.batch_size = 64;
  cfg.lr = 3e-3;
  cfg.lr_final = 1e-4;
  cfg.log_every = 100;
  std::vector<double> finals;
  double curve_scale = 0.0;
  for (std::uint64_t seed : {1u, 2u}) {
    Rng init(seed);
    auto model = sgm::ScoreModel::create({64, 64}, 0, {}, init);
    auto adam = nn::adam_init(model.net, cfg.lr);
    std::vector<double> curve;
    TrainHooks hooks;
    hooks.on_log = [&](std::int64_t, double loss) { curve.push_back(loss); };
    Rng rng(seed + 100);
    sgm::train(model, adam, data, cfg, rng, hooks);
    REQUIRE(curve.size() == 30);
    // Smoothed decrease over the first 1k steps.
    CHECK(curve[9] < curve[0]);
    CHECK((curve[7] + curve[8] + curve[9]) / 3 < (curve[0] + curve[1] + curve[2]) / 3);
    finals.push_back((curve[27] + curve[28] + curve[29]) / 3);
    // A point mass has no irreducible DSM loss.
    CHECK(finals.back() < 0.02 * curve[0]);
    curve_scale = std::max(curve_scale, curve[0]);
    const auto samples = sgm::sample(model, 500, std::nullopt, 100, rng);
    double mean_angle = 0.0;
    for (const auto& x : samples.rotations) mean_angle += geodesic_angle(mu, x) / 500;
    CHECK(mean_angle < 0.3);
  }
  CHECK(std::abs(finals[0] - finals[1]) < 0.01 * curve_scale);
}

TEST_CASE("zero score keeps the Haar prior") {
  const auto model = zero_model();
  Rng a(3), b(3);
  const auto out = sgm::sample(model, 1000, std::nullopt, 50, a);
  for (const auto& x : out.rotations) CHECK(x == sample_uniform<double>(b));
  CHECK(sgm::log_likelihood(model, expm<double>(Tangentd(1, 0, 0)), 50) == 0.0);
}

TEST_CASE("flow with the exact score recovers a single blob") {
  const sgm::VeSchedule sch;
  const double base = 0.1;
  const std::vector<Rotationd> mus{Rotationd::identity()};
  Rng rng(7);
  std::vector<Rotationd> start;
  for (int i = 0; i < 10000; ++i) start.push_back(sample_uniform<double>(rng));
  const auto out = sgm::flow_to_data([&](const Rotationd& x, double e) { return mixture_score(mus, base, x, e); }, sch,
                                     start, sgm::kDefaultSteps);
  std::vector<double> ref;
  for (int i = 0; i < 100000; ++i) ref.push_back(rotation_angle(ig::sample({Rotationd::identity(), base}, rng)));
  CHECK(stats::ks_2samp(angles(out), ref).p_value > 0.01);
}

TEST_CASE("flow with the exact score keeps two-blob proportions") {
  const sgm::VeSchedule sch;
  const auto mus = targets::blob_centers();
  Rng rng(8);
  std::vector<Rotationd> start;
  for (int i = 0; i < 10000; ++i) start.push_back(sample_uniform<double>(rng));
  const auto out = sgm::flow_to_data(
      [&](const Rotationd& x, double e) { return mixture_score(mus, targets::kBlobEps, x, e); }, sch, start,
      sgm::kDefaultSteps);
  int first = 0;
  for (const auto& x : out) first += targets::nearest_blob(x) == 0;
  CHECK(std::abs(first / 10000.0 - 0.5) < 0.05);
}

TEST_CASE("likelihood with the exact score") {
  const sgm::VeSchedule sch;
  const double base = 0.3;
  const std::vector<Rotationd> mus{Rotationd::identity()};
  const sgm::ScoreFn score = [&](const Rotationd& x, double e) { return mixture_score(mus, base, x, e); };
  const double at_centre = sgm::log_likelihood(score, sch, Rotationd::identity(), 100);
  const double far = sgm::log_likelihood(score, sch, expm<double>(Tangentd(0, 2.0, 0)), 100);
  CHECK(at_centre > far);
  CHECK(std::abs(at_centre - ig::log_density(Rotationd::identity(), {Rotationd::identity(), base})) < 0.1);
  Rng rng(9);
  double mass = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) mass += std::exp(sgm::log_likelihood(score, sch, sample_uniform<double>(rng), 100));
  CHECK(std::abs(mass / n - 1.0) < 0.1);
}

TEST_CASE("shape and argument errors") {
  Rng rng(1);
  auto model = sgm::ScoreModel::create({8}, 2, {}, rng);
  CHECK(model.net.input_dim() == 12);
  CHECK(model.net.output_dim() == 3);
  model.net *= 0.01;
  CHECK_THROWS_AS(sgm::sample(model, 5, std::nullopt, 10, rng), Error);
  CHECK_NOTHROW(sgm::sample(model, 5, Eigen::VectorXd(Eigen::VectorXd::Zero(2)), 10, rng));
  CHECK_THROWS_AS(sgm::dsm_loss(model, SampleSet{}, rng), Error);
  sgm::VeSchedule bad;
  bad.eps_min = 5.0;
  CHECK_THROWS_AS(sgm::ScoreModel::create({8}, 0, bad, rng), Error);
}
