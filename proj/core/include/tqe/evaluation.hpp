#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tqe/dataset.hpp"
#include "tqe/model.hpp"

namespace tqe::eval {

/// Correlations are nullopt when undefined (zero variance in either vector);
/// they are never silently NaN.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);
double mse(std::span<const double> pred, std::span<const double> gold);

/// Average ranks, 1-based; ties receive the mean of their rank positions.
std::vector<double> average_ranks(std::span<const double> values);

struct AspectMetrics {
  std::optional<double> pearson;
  std::optional<double> spearman;
  double mse = 0.0;
};

struct EvalReport {
  std::array<AspectMetrics, data::kAspects> aspects;
  std::size_t sample_count = 0;
  bool clamped = false;  // metrics computed on clamped rather than raw predictions

  /// Aligned text table: one row per aspect (UT, TS, IW, TM), columns r, rho, MSE.
  std::string table() const;
  std::string json() const;
};

/// Metrics over the full test corpus; raw (unclamped) predictions by default.
EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& config,
                    const data::Corpus& corpus, bool clamped = false);

}  // namespace tqe::eval
