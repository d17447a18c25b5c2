#include "so3diff/config.hpp"

#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace so3diff {

namespace pt = boost::property_tree;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& msg) {
  throw Error(ErrorCode::Config, "config field '" + field + "' " + msg);
}

template <typename T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return fallback;
  try {
    return boost::lexical_cast<T>(*node);
  } catch (const boost::bad_lexical_cast&) {
    bad(key, "has unparsable value '" + *node + "'");
  }
}

std::vector<int> parse_widths(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      bad(key, "must be a comma-separated list of integers, got '" + s + "'");
    }
  }
  return out;
}

void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) bad(field, msg);
}

}  // namespace

void RunConfig::validate() const {
  require(!hidden.empty(), "hidden", "needs at least one layer");
  for (int w : hidden) require(w >= 1, "hidden", "widths must be positive");
  require(train.iterations >= 0, "iterations", "must be >= 0");
  require(train.batch_size >= 1, "batch_size", "must be >= 1");
  require(train.lr > 0.0 && std::isfinite(train.lr), "lr", "must be positive");
  require(train.lr_final > 0.0 && std::isfinite(train.lr_final), "lr_final", "must be positive");
  require(train.beta1 >= 0.0 && train.beta1 < 1.0, "beta1", "must lie in [0, 1)");
  require(train.beta2 >= 0.0 && train.beta2 < 1.0, "beta2", "must lie in [0, 1)");
  require(train.adam_eps > 0.0, "adam_eps", "must be positive");
  require(train.log_every >= 0, "log_every", "must be >= 0");
  require(train.ckpt_every >= 0, "ckpt_every", "must be >= 0");
  if (model == ModelFamily::Sgm) {
    require(ve.T > 0.0 && std::isfinite(ve.T), "T", "must be positive");
    require(ve.eps_min > 0.0 && ve.eps_min < ve.T, "eps_min", "must lie in (0, T)");
    require(ve.sigma_eps > 0.0 && std::isfinite(ve.sigma_eps), "sigma_eps", "must be positive");
  } else {
    require(beta_first > 0.0 && beta_first < 1.0, "beta_first", "must lie in (0, 1)");
    require(beta_last > 0.0 && beta_last < 1.0, "beta_last", "must lie in (0, 1)");
    require(diffusion_steps >= 1, "diffusion_steps", "must be >= 1");
  }
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::Config, std::string("config: ") + e.what());
  }
  static const std::set<std::string> known{
      "model", "data", "out_dir", "resume", "seed", "hidden", "iterations", "batch_size", "lr", "lr_final", "beta1",
      "beta2", "adam_eps", "log_every", "ckpt_every", "T", "eps_min", "sigma_eps", "noise_draw", "beta_first", "beta_last",
      "diffusion_steps", "delta_head"};
  for (const auto& [key, node] : tree) {
    if (!node.empty()) bad(key, "sections are not supported; use flat keys");
    if (!known.count(key)) bad(key, "is not a recognised key");
  }
  RunConfig c;
  const auto model = get<std::string>(tree, "model", "sgm");
  if (model == "sgm") {
    c.model = ModelFamily::Sgm;
  } else if (model == "ddpm") {
    c.model = ModelFamily::Ddpm;
  } else {
    bad("model", "must be 'sgm' or 'ddpm', got '" + model + "'");
  }
  c.data = get<std::string>(tree, "data", "");
  c.out_dir = get<std::string>(tree, "out_dir", ".");
  c.resume = get<std::string>(tree, "resume", "");
  c.seed = get<std::uint64_t>(tree, "seed", 0);
  if (const auto h = tree.get_optional<std::string>("hidden")) c.hidden = parse_widths("hidden", *h);
  c.train.iterations = get<std::int64_t>(tree, "iterations", c.train.iterations);
  c.train.batch_size = get<int>(tree, "batch_size", c.train.batch_size);
  c.train.lr = get<double>(tree, "lr", c.train.lr);
  c.train.lr_final = get<double>(tree, "lr_final", c.train.lr);
  c.train.beta1 = get<double>(tree, "beta1", c.train.beta1);
  c.train.beta2 = get<double>(tree, "beta2", c.train.beta2);
  c.train.adam_eps = get<double>(tree, "adam_eps", c.train.adam_eps);
  c.train.log_every = get<int>(tree, "log_every", c.train.log_every);
  c.train.ckpt_every = get<int>(tree, "ckpt_every", c.train.ckpt_every);
  c.ve.T = get<double>(tree, "T", c.ve.T);
  c.ve.eps_min = get<double>(tree, "eps_min", c.ve.eps_min);
  c.ve.sigma_eps = get<double>(tree, "sigma_eps", c.ve.sigma_eps);
  const auto draw = get<std::string>(tree, "noise_draw", "log-uniform");
  if (draw == "log-uniform") {
    c.ve.draw = sgm::NoiseDraw::LogUniform;
  } else if (draw == "half-normal") {
    c.ve.draw = sgm::NoiseDraw::HalfNormal;
  } else {
    bad("noise_draw", "must be 'log-uniform' or 'half-normal', got '" + draw + "'");
  }
  c.beta_first = get<double>(tree, "beta_first", c.beta_first);
  c.beta_last = get<double>(tree, "beta_last", c.beta_last);
  c.diffusion_steps = get<int>(tree, "diffusion_steps", c.diffusion_steps);
  const auto head = get<std::string>(tree, "delta_head", "sixd");
  if (head == "sixd") {
    c.delta_head = ddpm::DeltaHead::SixD;
  } else if (head == "axis-angle") {
    c.delta_head = ddpm::DeltaHead::AxisAngle;
  } else {
    bad("delta_head", "must be 'sixd' or 'axis-angle', got '" + head + "'");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace so3diff
