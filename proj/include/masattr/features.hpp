#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "masattr/graph.hpp"
#include "masattr/similarity.hpp"
#include "masattr/trace.hpp"

namespace masattr {

inline constexpr std::size_t kFeatureDim = 13;

struct StepFeatureVector {
  // payload length, tool-call count, bracket depth, error-token count
  std::array<double, 4> tech{};
  // in-degree, out-degree, distinct upstream agents in window
  std::array<double, 3> interact{};
  // duration, gap to previous step, position ratio
  std::array<double, 3> temporal{};
  // goal similarity, prior-step consistency, distinctness
  std::array<double, 3> semantic{};

  std::array<double, kFeatureDim> flat() const;
  static StepFeatureVector from_flat(const std::array<double, kFeatureDim>& v);
};

struct FeatureSet {
  std::vector<StepFeatureVector> raw;
  // Zero mean, unit variance per feature over the trace; constant features are 0.
  std::vector<StepFeatureVector> standardized;
  bool degraded = false;
  std::string degraded_reason;
};

struct FeatureOptions {
  std::size_t upstream_window = 5;
};

// A null provider marks the semantic block degraded.
FeatureSet extract_features(const ExecutionTrace& trace, const DataDependencyGraph& graph,
                            const SimilarityProvider* provider, const FeatureOptions& options = {});

std::vector<StepFeatureVector> standardize(const std::vector<StepFeatureVector>& raw);

struct ContextVector {
  std::vector<double> values;
  std::string provenance = "deterministic";
};

class ContextEncoder {
 public:
  virtual ~ContextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual ContextVector encode(const ExecutionTrace& trace, const FeatureSet& features) const = 0;
};

// Pools [F_task; F_config; F_dynamic] and applies a seeded orthonormal projection to `dim` entries.
class DeterministicContextEncoder : public ContextEncoder {
 public:
  explicit DeterministicContextEncoder(std::size_t dim = 16, std::uint64_t seed = 0x6d61732d63747821ULL);
  std::size_t dim() const override { return dim_; }
  ContextVector encode(const ExecutionTrace& trace, const FeatureSet& features) const override;

  // The concatenated, unprojected input.
  static std::vector<double> pooled_input(const ExecutionTrace& trace, const FeatureSet& features);
  // d x D with orthonormal rows (D >= d) or orthonormal columns (D < d).
  Eigen::MatrixXd projection(std::size_t input_dim) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

ContextVector encode_context(const ExecutionTrace& trace, const FeatureSet& features);

}  // namespace masattr
