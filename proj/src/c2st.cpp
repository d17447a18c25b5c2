#include "so3diff/c2st.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "so3diff/mlp.hpp"
#include "so3diff/stats.hpp"
#include "so3diff/training.hpp"

namespace so3diff {

namespace {

Eigen::MatrixXd feature_matrix(const std::vector<const Rotationd*>& xs) {
  Eigen::MatrixXd f(nn::kRotationFeatures, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    nn::write_rotation_features(*xs[i], f.col(static_cast<Eigen::Index>(i)));
  }
  return f;
}

// Logistic loss on logits z with labels y: d/dz = sigmoid(z) - y.
nn::NetParams<double> train_classifier(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const C2stConfig& cfg,
                                       Rng& rng) {
  std::vector<int> widths{nn::kRotationFeatures};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(1);
  auto net = nn::mlp_init<double>(widths, rng);
  auto adam = nn::adam_init(net, cfg.lr, 0.9, 0.999, 1e-8);
  TrainConfig sched;
  sched.iterations = cfg.steps;
  sched.lr = cfg.lr;
  sched.lr_final = cfg.lr_final;
  std::uniform_int_distribution<Eigen::Index> pick(0, x.cols() - 1);
  Eigen::MatrixXd xb(x.rows(), cfg.batch_size);
  Eigen::RowVectorXd yb(cfg.batch_size);
  nn::Tape<double> tape;
  for (int step = 0; step < cfg.steps; ++step) {
    for (int k = 0; k < cfg.batch_size; ++k) {
      const Eigen::Index i = pick(rng);
      xb.col(k) = x.col(i);
      yb(k) = y(i);
    }
    const Eigen::MatrixXd z = nn::forward_batch(net, xb, &tape);
    const Eigen::MatrixXd up =
        (z.array().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }) - yb.array()) / cfg.batch_size;
    adam.lr = sched.lr_at(step);
    nn::adam_step(net, nn::backward_batch(net, tape, up).grads, adam);
  }
  return net;
}

}  // namespace

C2stResult c2st(const SampleSet& a, const SampleSet& b, int k_folds, Rng& rng, const C2stConfig& config) {
  if (k_folds < 2) throw Error(ErrorCode::InvalidArgument, "k_folds must be >= 2");
  const std::size_t m = std::min(a.size(), b.size());
  if (m < static_cast<std::size_t>(kC2stMinSamples)) {
    throw Error(ErrorCode::InsufficientSamples, "C2ST needs at least 500 samples per side");
  }
  auto subsample = [&](const SampleSet& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(m);
    return idx;
  };
  const auto ia = subsample(a), ib = subsample(b);
  // Interleave so every fold is balanced.
  struct Item {
    const Rotationd* x;
    double label;
  };
  std::vector<Item> items;
  items.reserve(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    items.push_back({&a.rotations[ia[i]], 0.0});
    items.push_back({&b.rotations[ib[i]], 1.0});
  }
  std::vector<double> acc;
  for (int fold = 0; fold < k_folds; ++fold) {
    std::vector<const Rotationd*> train_x, test_x;
    std::vector<double> train_y, test_y;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const bool held_out = static_cast<int>((i / 2) % static_cast<std::size_t>(k_folds)) == fold;
      (held_out ? test_x : train_x).push_back(items[i].x);
      (held_out ? test_y : train_y).push_back(items[i].label);
    }
    const auto net = train_classifier(feature_matrix(train_x),
                                      Eigen::Map<const Eigen::VectorXd>(train_y.data(), static_cast<Eigen::Index>(train_y.size())),
                                      config, rng);
    const Eigen::MatrixXd z = nn::forward_batch(net, feature_matrix(test_x));
    int correct = 0;
    for (std::size_t i = 0; i < test_y.size(); ++i) {
      correct += ((z(0, static_cast<Eigen::Index>(i)) > 0.0) == (test_y[i] > 0.5)) ? 1 : 0;
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(test_y.size()));
  }
  return {stats::mean(acc), stats::stddev(acc), static_cast<int>(m)};
}

}  // namespace so3diff
