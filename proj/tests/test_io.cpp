#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "so3diff/config.hpp"
#include "so3diff/io.hpp"
#include "so3diff/targets.hpp"

using namespace testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "so3diff_test_io";
  fs::create_directories(dir);
  return dir;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("sample files round-trip byte for byte") {
  Rng rng(1);
  const auto s = targets::sample_conditional_blobs(257, rng);
  const io::SampleProvenance p{42, 100, "conditional-blobs"};
  const auto bytes = io::encode_samples(s, p);
  CHECK(bytes.size() == 8 + 4 + 8 + 4 + 8 + 4 + 4 + p.meta.size() + 257 * 10 * 8);
  const auto back = io::decode_samples(bytes);
  CHECK(back.provenance.seed == 42);
  CHECK(back.provenance.n_steps == 100);
  CHECK(back.provenance.meta == p.meta);
  REQUIRE(back.samples.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(back.samples.rotations[i] == s.rotations[i]);
  CHECK(back.samples.contexts == s.contexts);
  CHECK(io::encode_samples(back.samples, back.provenance) == bytes);

  const fs::path path = scratch_dir() / "s.bin";
  io::write_samples(path, s, p);
  CHECK(io::read_file(path) == bytes);
}

TEST_CASE("damaged sample files report the byte offset") {
  Rng rng(2);
  const auto bytes = io::encode_samples(targets::sample_uniform_set(10, rng), {});
  auto cut = bytes;
  cut.resize(bytes.size() - 5);
  CHECK(code_of([&] { io::decode_samples(cut); }) == ErrorCode::Format);
  CHECK(message_of([&] { io::decode_samples(cut); }).find("byte") != std::string::npos);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(code_of([&] { io::decode_samples(magic); }) == ErrorCode::Format);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK(code_of([&] { io::decode_samples(trailing); }) == ErrorCode::Format);
}

TEST_CASE("SGM checkpoints round-trip and restore") {
  Rng rng(3);
  auto model = sgm::ScoreModel::create({16, 16}, 2, {}, rng);
  model.schedule.T = 2.5;
  model.schedule.draw = sgm::NoiseDraw::HalfNormal;
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.batch_size = 8;
  cfg.log_every = 0;
  auto adam = nn::adam_init(model.net, 1e-3, 0.9, 0.95);
  auto data = targets::sample_conditional_blobs(64, rng);
  data.contexts = Eigen::MatrixXd::Ones(2, 64);
  sgm::train(model, adam, data, cfg, rng);

  const auto c = io::to_checkpoint(model, adam);
  const auto bytes = io::encode_checkpoint(c);
  const auto decoded = io::decode_checkpoint(bytes);
  CHECK(io::encode_checkpoint(decoded) == bytes);
  const auto restored = io::sgm_from_checkpoint(decoded);
  CHECK(restored.model.net == model.net);
  CHECK(restored.model.context_dim == 2);
  CHECK(restored.model.schedule.T == 2.5);
  CHECK(restored.model.schedule.draw == sgm::NoiseDraw::HalfNormal);
  CHECK(restored.adam.step == 5);
  CHECK(restored.adam.m == adam.m);
  CHECK(restored.adam.v == adam.v);
  CHECK(restored.adam.beta2 == 0.95);

  const fs::path path = scratch_dir() / "c.bin";
  io::write_checkpoint(path, c);
  CHECK(io::read_file(path) == bytes);
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
  CHECK(code_of([&] { io::ddpm_from_checkpoint(decoded); }) == ErrorCode::Format);
}

TEST_CASE("DDPM checkpoints round-trip and restore") {
  Rng rng(4);
  for (auto head : {ddpm::DeltaHead::SixD, ddpm::DeltaHead::AxisAngle}) {
    const auto model = ddpm::ReverseKernelModel::create({8}, 1, head, rng);
    const auto schedule = ddpm::VpSchedule::linear(1e-3, 0.05, 7);
    const auto opt = ddpm::OptimState::init(model, {});
    const auto bytes = io::encode_checkpoint(io::to_checkpoint(model, schedule, opt));
    const auto r = io::ddpm_from_checkpoint(io::decode_checkpoint(bytes));
    CHECK(r.model.delta_net == model.delta_net);
    CHECK(r.model.eps_net == model.eps_net);
    CHECK(r.model.head == head);
    CHECK(r.model.context_dim == 1);
    CHECK(r.schedule.betas == schedule.betas);
  }
}

TEST_CASE("corrupt, truncated and foreign checkpoints are rejected") {
  Rng rng(5);
  const auto model = sgm::ScoreModel::create({4}, 0, {}, rng);
  const auto bytes = io::encode_checkpoint(io::to_checkpoint(model, nn::adam_init(model.net)));
  for (std::size_t at : {std::size_t(30), bytes.size() / 2, bytes.size() - 9}) {
    auto flipped = bytes;
    flipped[at] ^= 0x10;
    CHECK(code_of([&] { io::decode_checkpoint(flipped); }) == ErrorCode::Format);
  }
  for (std::size_t len : {std::size_t(0), std::size_t(11), bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    CHECK(code_of([&] { io::decode_checkpoint(cut); }) == ErrorCode::Format);
  }
  auto foreign = bytes;
  foreign[8] = 2;
  CHECK(code_of([&] { io::decode_checkpoint(foreign); }) == ErrorCode::CheckpointVersionMismatch);
  CHECK(code_of([&] { io::read_checkpoint(scratch_dir() / "missing.bin"); }) == ErrorCode::Format);
}

TEST_CASE("point clouds round-trip exactly") {
  Rng rng(6);
  OrientedPointCloud cloud;
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    cloud.positions.emplace_back(u(rng), u(rng), u(rng) * 1e-7);
    cloud.axes.push_back(sample_unit_vector<double>(rng));
  }
  const fs::path path = scratch_dir() / "cloud.csv";
  io::write_point_cloud(path, cloud);
  const auto back = io::read_point_cloud(path);
  REQUIRE(back.positions.size() == 50);
  for (int i = 0; i < 50; ++i) {
    CHECK(back.positions[i] == cloud.positions[i]);
    CHECK(back.axes[i] == cloud.axes[i]);
  }
  std::ofstream(path) << "x,y,z,ex,ey,ez\n1,2,3,0,0,1\n1,2,oops,0,0,1\n";
  const auto msg = message_of([&] { io::read_point_cloud(path); });
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("byte") != std::string::npos);
  std::ofstream(path) << "x,y,z,ex,ey,ez\n1,2,3,0,0,2\n";
  CHECK_THROWS_AS(io::read_point_cloud(path), Error);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(io::format_double(v)) == v);
  CHECK(io::format_double(0.5) == "0.5");
}

TEST_CASE("run configuration parsing") {
  const auto defaults = parse_config("");
  CHECK(defaults.model == ModelFamily::Sgm);
  CHECK(defaults.hidden == sgm::kDeskHidden);
  CHECK(defaults.vp_schedule().N() == 100);

  const auto c = parse_config(
      "model = ddpm\nseed = 9\nhidden = 32, 32\niterations = 12\nlr = 0.001\n"
      "beta_first = 0.001\nbeta_last = 0.2\ndiffusion_steps = 20\ndelta_head = axis-angle\n");
  CHECK(c.model == ModelFamily::Ddpm);
  CHECK(c.seed == 9);
  CHECK(c.hidden == std::vector<int>{32, 32});
  CHECK(c.train.iterations == 12);
  CHECK(c.train.lr == 0.001);
  CHECK(c.delta_head == ddpm::DeltaHead::AxisAngle);
  CHECK(c.vp_schedule().betas.back() == doctest::Approx(0.2));

  CHECK(code_of([] { parse_config("model = ddpm\nbeta_last = 1.5\n"); }) == ErrorCode::Config);
  CHECK(message_of([] { parse_config("model = ddpm\nbeta_last = 1.5\n"); }).find("'beta_last'") != std::string::npos);
  CHECK(message_of([] { parse_config("learning_rate = 1\n"); }).find("'learning_rate'") != std::string::npos);
  CHECK(message_of([] { parse_config("lr = fast\n"); }).find("'lr'") != std::string::npos);
  CHECK(message_of([] { parse_config("hidden = 3,x\n"); }).find("'hidden'") != std::string::npos);
  CHECK(code_of([] { parse_config("model = gan\n"); }) == ErrorCode::Config);
  CHECK(defaults.ve.draw == sgm::NoiseDraw::LogUniform);
  CHECK(parse_config("noise_draw = half-normal\nsigma_eps = 0.3\n").ve.draw == sgm::NoiseDraw::HalfNormal);
  CHECK(message_of([] { parse_config("noise_draw = cauchy\n"); }).find("'noise_draw'") != std::string::npos);
  CHECK(code_of([] { parse_config("eps_min = 5\n"); }) == ErrorCode::Config);
}
