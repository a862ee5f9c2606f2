#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tqe/dataset.hpp"

namespace tqe::analysis {

// ---- inter-annotator agreement ----

enum class AgreementMetric { kInterval, kNominal, kOrdinal };

/// Units x annotators, missing ratings allowed.
struct RatingsMatrix {
  std::vector<std::vector<std::optional<double>>> values;
  AgreementMetric metric = AgreementMetric::kInterval;

  std::size_t units() const { return values.size(); }
};

/// 1 - D_observed/D_expected over pairable values (coincidence formulation).
/// nullopt when fewer than 2 pairable values exist or expected disagreement
/// is zero (all ratings identical).
std::optional<double> krippendorff_alpha(const RatingsMatrix& ratings);

// ---- dataset descriptives ----

struct Descriptives {
  double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0;
};

/// Quartiles use linear interpolation between order statistics.
Descriptives describe(std::vector<double> values);

struct ScoreDescriptives {
  std::array<Descriptives, data::kAspects> aspects;
  Descriptives total;

  /// Rows Min/1st Quartile/Median/Mean/3rd Quartile/Max, columns UT TS IW TM Score.
  std::string table() const;
  std::string json() const;
};

ScoreDescriptives score_descriptives(const data::Corpus& corpus);

// ---- error profiles ----

inline constexpr std::array<const char*, 11> kErrorTypes{
    "mistranslation", "omission", "awkward",  "punctuation", "undertranslation",
    "unidiomatic",    "grammar",  "addition", "spelling",    "terminology",
    "untranslated"};

struct ErrorProfile {
  std::string id;
  std::string label;  // HT or MT
  std::array<double, kErrorTypes.size()> counts{};
};

/// CSV with header "id,label,<the 11 error types in order>".
std::vector<ErrorProfile> parse_error_profiles(const std::filesystem::path& path);

// ---- PCA / varimax / cos2 ----

/// Row-major dense matrix for the plain (non-differentiated) numerics.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

struct PcaResult {
  Mat components;       // cols x k, orthonormal columns (eigenvectors)
  Mat loadings;         // cols x k, eigenvector * sqrt(eigenvalue)
  Mat scores;           // rows x k, centered data projected onto components
  std::vector<double> explained_ratio;  // k entries, non-increasing
  std::vector<double> eigenvalues;      // all of them, descending
  std::vector<double> row_sq_norm;      // per instance, in the decomposed space
  std::vector<double> column_means;
  bool rank_deficient = false;  // fewer informative components than requested
};

/// Column-centered PCA via eigendecomposition of the covariance matrix.
/// standardize additionally scales columns to unit variance.
PcaResult pca(const Mat& matrix, std::size_t n_components = 3, bool standardize = false);

struct VarimaxResult {
  Mat rotated;    // same shape as the input loadings
  Mat rotation;   // k x k orthogonal
  std::vector<double> criterion_history;  // per sweep, non-decreasing
};

/// Classical pairwise planar rotations maximizing the varimax criterion.
/// Column signs are fixed so the largest-magnitude loading is positive.
VarimaxResult varimax(const Mat& loadings, double tol = 1e-6, std::size_t max_iter = 100);

double varimax_criterion(const Mat& loadings);

struct Cos2Result {
  /// Per instance: cos^2 against each retained dimension, or nullopt for
  /// zero-norm instances (profiles at the centroid).
  std::vector<std::optional<std::vector<double>>> cos2;
  /// True when the instance's dim-1 + dim-2 cos^2 sum is strictly below 0.5.
  std::vector<bool> shaded;
};

Cos2Result cos2_contributions(const PcaResult& result);

}  // namespace tqe::analysis
