#pragma once

// Run configuration read from a flat key = value file. Unknown keys and
// out-of-range values are rejected with the offending field named.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "so3diff/ddpm.hpp"
#include "so3diff/sgm.hpp"
#include "so3diff/training.hpp"

namespace so3diff {

enum class ModelFamily { Sgm, Ddpm };

struct RunConfig {
  ModelFamily model = ModelFamily::Sgm;
  std::filesystem::path data;
  std::filesystem::path out_dir = ".";
  /// Checkpoint to resume from; empty starts fresh.
  std::filesystem::path resume;
  std::uint64_t seed = 0;
  std::vector<int> hidden = sgm::kDeskHidden;
  TrainConfig train;
  sgm::VeSchedule ve;
  double beta_first = 1e-4;
  double beta_last = 0.1;
  int diffusion_steps = 100;
  ddpm::DeltaHead delta_head = ddpm::DeltaHead::SixD;

  ddpm::VpSchedule vp_schedule() const { return ddpm::VpSchedule::linear(beta_first, beta_last, diffusion_steps); }
  /// Throws Config naming the first invalid field.
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace so3diff
