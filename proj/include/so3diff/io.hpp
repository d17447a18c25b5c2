#pragma once

// Binary sample and checkpoint files, text exports. All multi-byte fields are
// little-endian; the layouts are documented in the README.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "so3diff/ddpm.hpp"
#include "so3diff/ed_correlation.hpp"
#include "so3diff/sample_set.hpp"
#include "so3diff/sgm.hpp"

namespace so3diff::io {

inline constexpr std::uint32_t kSampleFileVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct SampleProvenance {
  std::uint64_t seed = 0;
  std::uint32_t n_steps = 0;
  /// Free text, e.g. the target name or model kind.
  std::string meta;
};

struct SampleFile {
  SampleSet samples;
  SampleProvenance provenance;
};

std::vector<std::uint8_t> encode_samples(const SampleSet& s, const SampleProvenance& p);
SampleFile decode_samples(const std::vector<std::uint8_t>& bytes);

void write_samples(const std::filesystem::path& path, const SampleSet& s, const SampleProvenance& p);
SampleFile read_samples(const std::filesystem::path& path);

/// CSV with a header row: qa,qb,qc,qd then ctx0.. when present.
void write_samples_text(const std::filesystem::path& path, const SampleSet& s);

enum class ModelKind : std::uint32_t { Sgm = 1, Ddpm = 2 };

struct Checkpoint {
  ModelKind kind = ModelKind::Sgm;
  std::int64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<nn::NetParams<double>> nets;
  std::vector<nn::AdamState<double>> optim;  // one per net
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
/// Throws CheckpointVersionMismatch for a foreign version and Format for bad
/// magic, truncation or CRC failure.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file and renames, so failures leave no partial file.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const sgm::ScoreModel& m, const nn::AdamState<double>& adam, nlohmann::json extra = {});
Checkpoint to_checkpoint(const ddpm::ReverseKernelModel& m, const ddpm::VpSchedule& schedule,
                         const ddpm::OptimState& opt, nlohmann::json extra = {});

struct SgmRestored {
  sgm::ScoreModel model;
  nn::AdamState<double> adam;
};
struct DdpmRestored {
  ddpm::ReverseKernelModel model;
  ddpm::VpSchedule schedule;
  ddpm::OptimState opt;
};

SgmRestored sgm_from_checkpoint(const Checkpoint& c);
DdpmRestored ddpm_from_checkpoint(const Checkpoint& c);

/// CSV x,y,z,ex,ey,ez.
void write_point_cloud(const std::filesystem::path& path, const OrientedPointCloud& cloud);
OrientedPointCloud read_point_cloud(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace so3diff::io
