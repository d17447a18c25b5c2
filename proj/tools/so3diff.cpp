// Command-line driver: dataset generation, training, sampling, evaluation and
// figure data. Exit codes: 0 success, 2 invalid input, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "so3diff/c2st.hpp"
#include "so3diff/config.hpp"
#include "so3diff/ed_correlation.hpp"
#include "so3diff/io.hpp"
#include "so3diff/plot.hpp"
#include "so3diff/targets.hpp"

using namespace so3diff;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

// Independent RNG streams per purpose.
enum Stream : std::uint64_t { kInit = 0, kTrain = 1, kSample = 2, kEval = 3, kData = 4 };

Eigen::MatrixXd parse_context(const std::string& s) {
  if (s.empty()) return {};
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad context value '" + item + "'");
    }
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<RadialBin> parse_bins(const std::string& s) {
  std::vector<RadialBin> bins;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "bin '" + item + "' must be lo:hi");
    try {
      bins.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bin '" + item + "' must be lo:hi");
    }
  }
  return bins;
}

void emit_report(const json& report, const std::string& out) {
  std::cout << report.dump(2) << '\n';
  if (!out.empty()) io::write_text_atomic(out, report.dump(2) + "\n");
}

int cmd_gen_data(const std::string& target, int n, std::uint64_t seed, const std::string& out, const std::string& text) {
  Rng rng = make_stream(seed, kData);
  const SampleSet s = targets::sample_target(target, n, rng);
  io::write_samples(out, s, {seed, 0, target});
  if (!text.empty()) io::write_samples_text(text, s);
  std::cout << "wrote " << s.size() << " rotations of '" << target << "' to " << out << '\n';
  return 0;
}

int cmd_gen_cloud(int n, std::uint64_t seed, double box, const std::string& out) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "--n must be >= 2");
  Rng rng = make_stream(seed, kData);
  std::uniform_real_distribution<double> pos(0.0, box);
  OrientedPointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.positions.emplace_back(pos(rng), pos(rng), pos(rng));
    cloud.axes.push_back(sample_unit_vector<double>(rng));
  }
  io::write_point_cloud(out, cloud);
  std::cout << "wrote isotropic cloud of " << n << " points to " << out << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override, const std::string& out_override) {
  RunConfig cfg = load_config(config_path);
  if (seed_override) cfg.seed = *seed_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (cfg.data.empty()) throw Error(ErrorCode::Config, "config field 'data' is required for training");
  const SampleSet data = io::read_samples(cfg.data).samples;
  fs::create_directories(cfg.out_dir);

  const fs::path loss_path = cfg.out_dir / "loss.csv";
  const bool resuming = !cfg.resume.empty();
  std::ofstream loss_out(loss_path, resuming ? std::ios::app : std::ios::trunc);
  if (!resuming) loss_out << "step,loss\n";
  TrainHooks hooks;
  hooks.on_log = [&](std::int64_t step, double loss) {
    loss_out << step << ',' << io::format_double(loss) << '\n';
    loss_out.flush();
    std::cerr << "step " << step << " loss " << loss << '\n';
  };
  const json extra{{"seed", cfg.seed}, {"data", cfg.data.string()}};
  auto ckpt_name = [&](std::int64_t step) { return cfg.out_dir / ("checkpoint_" + std::to_string(step) + ".bin"); };

  if (cfg.model == ModelFamily::Sgm) {
    sgm::ScoreModel model;
    nn::AdamState<double> adam;
    if (resuming) {
      auto r = io::sgm_from_checkpoint(io::read_checkpoint(cfg.resume));
      model = std::move(r.model);
      adam = std::move(r.adam);
    } else {
      Rng init = make_stream(cfg.seed, kInit);
      model = sgm::ScoreModel::create(cfg.hidden, data.context_dim(), cfg.ve, init);
      adam = nn::adam_init(model.net, cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps);
    }
    hooks.on_checkpoint = [&](std::int64_t step) { io::write_checkpoint(ckpt_name(step), io::to_checkpoint(model, adam, extra)); };
    Rng rng = make_stream(cfg.seed, kTrain + 16 * static_cast<std::uint64_t>(adam.step));
    sgm::train(model, adam, data, cfg.train, rng, hooks);
    io::write_checkpoint(cfg.out_dir / "checkpoint.bin", io::to_checkpoint(model, adam, extra));
    std::cout << "trained SGM to step " << adam.step << "; checkpoint " << (cfg.out_dir / "checkpoint.bin") << '\n';
  } else {
    ddpm::ReverseKernelModel model;
    ddpm::VpSchedule schedule;
    ddpm::OptimState opt;
    if (resuming) {
      auto r = io::ddpm_from_checkpoint(io::read_checkpoint(cfg.resume));
      model = std::move(r.model);
      schedule = std::move(r.schedule);
      opt = std::move(r.opt);
    } else {
      Rng init = make_stream(cfg.seed, kInit);
      schedule = cfg.vp_schedule();
      model = ddpm::ReverseKernelModel::create(cfg.hidden, data.context_dim(), cfg.delta_head, init);
      opt = ddpm::OptimState::init(model, cfg.train);
    }
    hooks.on_checkpoint = [&](std::int64_t step) {
      io::write_checkpoint(ckpt_name(step), io::to_checkpoint(model, schedule, opt, extra));
    };
    Rng rng = make_stream(cfg.seed, kTrain + 16 * static_cast<std::uint64_t>(opt.step()));
    ddpm::train(model, opt, data, schedule, cfg.train, rng, hooks);
    io::write_checkpoint(cfg.out_dir / "checkpoint.bin", io::to_checkpoint(model, schedule, opt, extra));
    std::cout << "trained DDPM to step " << opt.step() << "; checkpoint " << (cfg.out_dir / "checkpoint.bin") << '\n';
  }
  return 0;
}

int cmd_sample(const std::string& ckpt_path, int n, std::uint64_t seed, const std::string& out, int n_steps,
               const std::string& context_text) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "--n must be >= 1");
  if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "--steps must be >= 1");
  const io::Checkpoint ckpt = io::read_checkpoint(ckpt_path);
  const Eigen::MatrixXd ctx = parse_context(context_text);
  Rng rng = make_stream(seed, kSample);
  SampleSet s;
  std::uint32_t steps_used = 0;
  std::string kind;
  if (ckpt.kind == io::ModelKind::Sgm) {
    const auto r = io::sgm_from_checkpoint(ckpt);
    s = sgm::sample(r.model, ctx, n, n_steps, rng);
    steps_used = static_cast<std::uint32_t>(n_steps);
    kind = "sgm";
  } else {
    const auto r = io::ddpm_from_checkpoint(ckpt);
    s = ddpm::sample(r.model, r.schedule, n, ctx, rng);
    steps_used = static_cast<std::uint32_t>(r.schedule.N());
    kind = "ddpm";
  }
  io::write_samples(out, s, {seed, steps_used, kind});
  std::cout << "wrote " << s.size() << " " << kind << " samples to " << out << '\n';
  return 0;
}

int cmd_eval_c2st(const std::string& a_path, const std::string& b_path, int k_folds, std::uint64_t seed,
                  const std::string& out) {
  const auto a = io::read_samples(a_path);
  const auto b = io::read_samples(b_path);
  Rng rng = make_stream(seed, kEval);
  const C2stConfig cfg;
  const C2stResult r = c2st(a.samples, b.samples, k_folds, rng, cfg);
  emit_report({{"metric", "c2st"},
               {"score", r.score},
               {"std", r.std},
               {"config", {{"a", a_path}, {"b", b_path}, {"k_folds", k_folds}, {"seed", seed},
                           {"per_side", r.per_side}, {"hidden", cfg.hidden}, {"steps", cfg.steps},
                           {"batch_size", cfg.batch_size}}}},
              out);
  return 0;
}

int cmd_eval_ed(const std::string& cloud_path, const std::string& bins_text, int jackknife, const std::string& out) {
  const auto cloud = io::read_point_cloud(cloud_path);
  const auto bins = parse_bins(bins_text);
  const auto values = ed_correlation(cloud, bins, jackknife);
  json rows = json::array();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    json row{{"r_lo", bins[i].lo}, {"r_hi", bins[i].hi}};
    if (values[i]) {
      row["omega"] = values[i]->omega;
      row["err"] = values[i]->err;
      row["pairs"] = values[i]->pairs;
    } else {
      row["omega"] = nullptr;
      row["err"] = nullptr;
      row["pairs"] = 0;
    }
    rows.push_back(row);
  }
  emit_report({{"metric", "ed_correlation"},
               {"bins", rows},
               {"config", {{"cloud", cloud_path}, {"jackknife_blocks", jackknife}, {"points", cloud.positions.size()}}}},
              out);
  return 0;
}

int cmd_plot(const std::string& samples, const std::string& out, const std::string& svg) {
  const auto f = io::read_samples(samples);
  plot::write_plot(out, f.samples, svg);
  std::cout << "wrote " << f.samples.size() << " projected points to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion models on SO(3)"};
  app.require_subcommand(1);

  std::string target, out, text, config, checkpoint, a_path, b_path, cloud, bins = "0.5:1,1:2,2:4", svg, context;
  int n = 10000, steps = sgm::kDefaultSteps, k_folds = 5, jackknife = kDefaultJackknifeBlocks;
  std::uint64_t seed = 0;
  double box = 10.0;

  auto* gen = app.add_subcommand("gen-data", "Sample a synthetic target to a sample file");
  gen->add_option("target", target, "Target name")->required();
  gen->add_option("--n", n, "Number of samples");
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--out", out, "Output sample file")->required();
  gen->add_option("--text", text, "Also write a CSV quaternion export");

  auto* gen_cloud = app.add_subcommand("gen-cloud", "Write an isotropic oriented point cloud");
  gen_cloud->add_option("--n", n, "Number of points");
  gen_cloud->add_option("--seed", seed, "RNG seed");
  gen_cloud->add_option("--box", box, "Box side length");
  gen_cloud->add_option("--out", out, "Output CSV")->required();

  std::optional<std::uint64_t> train_seed;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config, "Config file")->required();
  train->add_option("--seed", train_seed, "Override the config seed");
  train->add_option("--out", out, "Override the output directory");

  auto* samp = app.add_subcommand("sample", "Draw samples from a checkpoint");
  samp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  samp->add_option("--n", n, "Number of samples");
  samp->add_option("--seed", seed, "RNG seed");
  samp->add_option("--out", out, "Output sample file")->required();
  samp->add_option("--steps", steps, "ODE steps (SGM)");
  samp->add_option("--context", context, "Comma-separated context vector");

  auto* ev = app.add_subcommand("eval-c2st", "Classifier two-sample test between two sample files");
  ev->add_option("a", a_path, "First sample file")->required();
  ev->add_option("b", b_path, "Second sample file")->required();
  ev->add_option("--k-folds", k_folds, "Cross-validation folds");
  ev->add_option("--seed", seed, "RNG seed");
  ev->add_option("--out", out, "JSON report path");

  auto* ed = app.add_subcommand("eval-ed", "Ellipticity-direction correlation of a point cloud");
  ed->add_option("cloud", cloud, "Point cloud CSV")->required();
  ed->add_option("--bins", bins, "Separation bins lo:hi,lo:hi,...");
  ed->add_option("--jackknife", jackknife, "Jackknife blocks (a perfect cube)");
  ed->add_option("--out", out, "JSON report path");

  auto* pl = app.add_subcommand("plot", "Canonical-axis projection of a sample file");
  pl->add_option("samples", a_path, "Sample file")->required();
  pl->add_option("--out", out, "Output CSV")->required();
  pl->add_option("--svg", svg, "Optional SVG scatter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_data(target, n, seed, out, text);
    if (*gen_cloud) return cmd_gen_cloud(n, seed, box, out);
    if (*train) return cmd_train(config, train_seed, out);
    if (*samp) return cmd_sample(checkpoint, n, seed, out, steps, context);
    if (*ev) return cmd_eval_c2st(a_path, b_path, k_folds, seed, out);
    if (*ed) return cmd_eval_ed(cloud, bins, jackknife, out);
    if (*pl) return cmd_plot(a_path, out, svg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? kExitValidation : kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return 0;
}
