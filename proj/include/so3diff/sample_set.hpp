#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "so3diff/random.hpp"
#include "so3diff/so3.hpp"

namespace so3diff {

/// Rotations with optional per-sample context vectors (one column each).
struct SampleSet {
  std::vector<Rotationd> rotations;
  Eigen::MatrixXd contexts;  // context_dim x size(), or empty
  std::string label;

  std::size_t size() const { return rotations.size(); }
  bool empty() const { return rotations.empty(); }
  int context_dim() const { return static_cast<int>(contexts.rows()); }
  bool has_context() const { return contexts.rows() > 0; }

  std::optional<Eigen::VectorXd> context(std::size_t i) const {
    if (!has_context()) return std::nullopt;
    return Eigen::VectorXd(contexts.col(static_cast<Eigen::Index>(i)));
  }

  /// Throws NotRotation / ShapeMismatch.
  void validate() const {
    if (has_context() && contexts.cols() != static_cast<Eigen::Index>(rotations.size())) {
      throw Error(ErrorCode::ShapeMismatch, "one context column per rotation required");
    }
    for (const auto& r : rotations) Rotationd::from_matrix(r.matrix());
  }
};

/// Uniform draw with replacement of `n` items.
inline SampleSet draw_batch(const SampleSet& data, int n, Rng& rng) {
  if (data.empty()) throw Error(ErrorCode::InsufficientSamples, "empty dataset");
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  SampleSet batch;
  batch.rotations.reserve(static_cast<std::size_t>(n));
  if (data.has_context()) batch.contexts.resize(data.context_dim(), n);
  for (int k = 0; k < n; ++k) {
    const std::size_t i = pick(rng);
    batch.rotations.push_back(data.rotations[i]);
    if (data.has_context()) batch.contexts.col(k) = data.contexts.col(static_cast<Eigen::Index>(i));
  }
  return batch;
}

/// Concatenates two sets; both must agree on context dimension.
inline SampleSet concat(const SampleSet& a, const SampleSet& b) {
  if (a.context_dim() != b.context_dim()) throw Error(ErrorCode::ShapeMismatch, "context dimensions differ");
  SampleSet out;
  out.rotations = a.rotations;
  out.rotations.insert(out.rotations.end(), b.rotations.begin(), b.rotations.end());
  if (a.has_context()) {
    out.contexts.resize(a.context_dim(), a.contexts.cols() + b.contexts.cols());
    out.contexts << a.contexts, b.contexts;
  }
  out.label = a.label;
  return out;
}

}  // namespace so3diff
