#include "tqe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "tqe/errors.hpp"
#include "tqe/util.hpp"

namespace tqe::analysis {

// ---- Krippendorff's alpha ----

namespace {

using ValueCounts = std::map<double, double>;

double delta_sq(AgreementMetric metric, double a, double b,
                const std::vector<double>& sorted_values,
                const std::vector<double>& counts,
                const std::vector<double>& prefix) {
  switch (metric) {
    case AgreementMetric::kInterval:
      return (a - b) * (a - b);
    case AgreementMetric::kNominal:
      return a == b ? 0.0 : 1.0;
    case AgreementMetric::kOrdinal: {
      if (a == b) return 0.0;
      const double lo = std::min(a, b), hi = std::max(a, b);
      const auto lo_it = std::lower_bound(sorted_values.begin(), sorted_values.end(), lo);
      const auto hi_it = std::lower_bound(sorted_values.begin(), sorted_values.end(), hi);
      const std::size_t li = static_cast<std::size_t>(lo_it - sorted_values.begin());
      const std::size_t hi_i = static_cast<std::size_t>(hi_it - sorted_values.begin());
      // sum of counts for values in [lo, hi], minus half the endpoints
      const double between = prefix[hi_i + 1] - prefix[li];
      const double d = between - (counts[li] + counts[hi_i]) / 2.0;
      return d * d;
    }
  }
  return 0.0;
}

}  // namespace

std::optional<double> krippendorff_alpha(const RatingsMatrix& ratings) {
  std::vector<std::vector<double>> units;
  for (const auto& row : ratings.values) {
    std::vector<double> xs;
    for (const auto& v : row)
      if (v) xs.push_back(*v);
    if (xs.size() >= 2) units.push_back(std::move(xs));
  }
  double n = 0;
  ValueCounts pooled;
  for (const auto& u : units) {
    n += static_cast<double>(u.size());
    for (double v : u) pooled[v] += 1.0;
  }
  if (n < 2) return std::nullopt;

  std::vector<double> sorted_values, counts, prefix{0.0};
  for (const auto& [v, c] : pooled) {
    sorted_values.push_back(v);
    counts.push_back(c);
    prefix.push_back(prefix.back() + c);
  }

  double d_observed = 0.0;
  for (const auto& u : units) {
    double unit_sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j)
          unit_sum += delta_sq(ratings.metric, u[i], u[j], sorted_values, counts, prefix);
    d_observed += unit_sum / static_cast<double>(u.size() - 1);
  }
  d_observed /= n;

  double d_expected = 0.0;
  for (std::size_t c = 0; c < sorted_values.size(); ++c)
    for (std::size_t k = 0; k < sorted_values.size(); ++k)
      if (c != k)
        d_expected += counts[c] * counts[k] *
                      delta_sq(ratings.metric, sorted_values[c], sorted_values[k],
                               sorted_values, counts, prefix);
  d_expected /= n * (n - 1.0);

  if (d_expected == 0.0) return std::nullopt;
  return 1.0 - d_observed / d_expected;
}

// ---- descriptives ----

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Descriptives describe(std::vector<double> values) {
  if (values.empty()) throw NumericError("describe: empty sample");
  std::sort(values.begin(), values.end());
  Descriptives d;
  d.min = values.front();
  d.max = values.back();
  d.q1 = quantile_sorted(values, 0.25);
  d.median = quantile_sorted(values, 0.50);
  d.q3 = quantile_sorted(values, 0.75);
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  return d;
}

ScoreDescriptives score_descriptives(const data::Corpus& corpus) {
  if (corpus.empty()) throw ConfigError("score_descriptives: empty corpus");
  ScoreDescriptives out;
  std::array<std::vector<double>, data::kAspects> per_aspect;
  std::vector<double> totals;
  for (const auto& ex : corpus.examples) {
    for (std::size_t a = 0; a < data::kAspects; ++a) per_aspect[a].push_back(ex.gold[a]);
    totals.push_back(ex.gold.total());
  }
  for (std::size_t a = 0; a < data::kAspects; ++a) out.aspects[a] = describe(per_aspect[a]);
  out.total = describe(totals);
  return out;
}

namespace {

constexpr std::array<std::pair<const char*, double Descriptives::*>, 6> kDescRows{{
    {"Min.", &Descriptives::min},
    {"1st Quartile", &Descriptives::q1},
    {"Median", &Descriptives::median},
    {"Mean", &Descriptives::mean},
    {"3rd Quartile", &Descriptives::q3},
    {"Max.", &Descriptives::max},
}};

}  // namespace

std::string ScoreDescriptives::table() const {
  std::string out = "                   UT       TS       IW       TM    Score\n";
  for (const auto& [label, field] : kDescRows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-14s %8.2f %8.2f %8.2f %8.2f %8.2f\n", label,
                  aspects[0].*field, aspects[1].*field, aspects[2].*field, aspects[3].*field,
                  total.*field);
    out += buf;
  }
  return out;
}

std::string ScoreDescriptives::json() const {
  nlohmann::json j;
  auto fill = [](const Descriptives& d) {
    return nlohmann::json{{"min", d.min}, {"q1", d.q1},   {"median", d.median},
                          {"mean", d.mean}, {"q3", d.q3}, {"max", d.max}};
  };
  for (std::size_t a = 0; a < data::kAspects; ++a) j[data::kAspectNames[a]] = fill(aspects[a]);
  j["total"] = fill(total);
  return j.dump(2);
}

// ---- error profiles ----

std::vector<ErrorProfile> parse_error_profiles(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open error-profile file: " + path.string());
  const std::string name = path.filename().string();
  std::string expected_header = "id,label";
  for (const char* t : kErrorTypes) expected_header += std::string(",") + t;

  std::string line;
  std::size_t line_no = 0;
  std::vector<ErrorProfile> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != expected_header)
        throw ParseError(name + ":1: bad header, expected '" + expected_header + "'");
      continue;
    }
    const auto fields = split_on(line, ',');
    if (fields.size() != 2 + kErrorTypes.size())
      throw ParseError(name + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(2 + kErrorTypes.size()) + " fields, got " +
                       std::to_string(fields.size()));
    ErrorProfile p;
    p.id = fields[0];
    p.label = fields[1];
    if (p.id.empty()) throw ParseError(name + ":" + std::to_string(line_no) + ": empty id");
    if (p.label != "HT" && p.label != "MT")
      throw ParseError(name + ":" + std::to_string(line_no) + ": label must be HT or MT, got '" +
                       p.label + "'");
    for (std::size_t i = 0; i < kErrorTypes.size(); ++i) {
      const std::string& f = fields[2 + i];
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size() || v < 0 || v != std::floor(v))
        throw ParseError(name + ":" + std::to_string(line_no) + ": count '" + f + "' for " +
                         kErrorTypes[i] + " is not a non-negative integer");
      p.counts[i] = v;
    }
    out.push_back(std::move(p));
  }
  if (out.empty()) throw ParseError(name + ": no data rows");
  return out;
}

// ---- PCA ----

namespace {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
void jacobi_symmetric(Mat a, Mat& eigenvectors, std::vector<double>& eigenvalues) {
  const std::size_t n = a.rows;
  eigenvectors = Mat(n, n);
  for (std::size_t i = 0; i < n; ++i) eigenvectors.at(i, i) = 1.0;

  for (std::size_t sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a.at(i, p), aiq = a.at(i, q);
          a.at(i, p) = c * aip - s * aiq;
          a.at(i, q) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a.at(p, i), aqi = a.at(q, i);
          a.at(p, i) = c * api - s * aqi;
          a.at(q, i) = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = eigenvectors.at(i, p), viq = eigenvectors.at(i, q);
          eigenvectors.at(i, p) = c * vip - s * viq;
          eigenvectors.at(i, q) = s * vip + c * viq;
        }
      }
  }
  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a.at(i, i);
}

}  // namespace

PcaResult pca(const Mat& matrix, std::size_t n_components, bool standardize) {
  if (matrix.rows < 2) throw NumericError("pca: need at least 2 instances");
  if (matrix.cols < 1) throw NumericError("pca: need at least 1 column");
  if (n_components == 0) throw ConfigError("pca: n_components must be >= 1");

  const std::size_t rows = matrix.rows, cols = matrix.cols;
  PcaResult result;
  Mat centered = matrix;
  result.column_means.assign(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < rows; ++i) m += matrix.at(i, j);
    m /= static_cast<double>(rows);
    result.column_means[j] = m;
    for (std::size_t i = 0; i < rows; ++i) centered.at(i, j) -= m;
  }
  if (standardize) {
    for (std::size_t j = 0; j < cols; ++j) {
      double ss = 0.0;
      for (std::size_t i = 0; i < rows; ++i) ss += centered.at(i, j) * centered.at(i, j);
      const double sd = std::sqrt(ss / static_cast<double>(rows - 1));
      if (sd > 1e-12)
        for (std::size_t i = 0; i < rows; ++i) centered.at(i, j) /= sd;
    }
  }

  Mat cov(cols, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t k = j; k < cols; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += centered.at(i, j) * centered.at(i, k);
      acc /= static_cast<double>(rows - 1);
      cov.at(j, k) = acc;
      cov.at(k, j) = acc;
    }

  Mat vecs;
  std::vector<double> vals;
  jacobi_symmetric(cov, vecs, vals);

  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });

  result.eigenvalues.resize(cols);
  for (std::size_t i = 0; i < cols; ++i)
    result.eigenvalues[i] = std::max(0.0, vals[order[i]]);

  double total_var = 0.0;
  for (double v : result.eigenvalues) total_var += v;

  const std::size_t k_requested = std::min(n_components, cols);
  std::size_t rank = 0;
  const double rank_tol = result.eigenvalues.empty()
                              ? 0.0
                              : result.eigenvalues[0] * 1e-12;
  for (double v : result.eigenvalues)
    if (v > rank_tol && v > 0.0) ++rank;
  std::size_t k = k_requested;
  if (rank < k_requested) {
    result.rank_deficient = true;
    k = std::max<std::size_t>(rank, 1);
  }

  result.components = Mat(cols, k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < cols; ++i)
      result.components.at(i, j) = vecs.at(i, order[j]);

  // Sign convention: the largest-magnitude entry of each component is positive.
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < cols; ++i)
      if (std::abs(result.components.at(i, j)) > std::abs(result.components.at(arg, j)))
        arg = i;
    if (result.components.at(arg, j) < 0)
      for (std::size_t i = 0; i < cols; ++i) result.components.at(i, j) *= -1.0;
  }

  result.loadings = Mat(cols, k);
  for (std::size_t j = 0; j < k; ++j) {
    const double scale = std::sqrt(result.eigenvalues[j]);
    for (std::size_t i = 0; i < cols; ++i)
      result.loadings.at(i, j) = result.components.at(i, j) * scale;
  }

  result.scores = Mat(rows, k);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        acc += centered.at(i, c) * result.components.at(c, j);
      result.scores.at(i, j) = acc;
    }

  result.explained_ratio.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    result.explained_ratio[j] = total_var > 0.0 ? result.eigenvalues[j] / total_var : 0.0;

  result.row_sq_norm.assign(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += centered.at(i, j) * centered.at(i, j);
    result.row_sq_norm[i] = acc;
  }
  return result;
}

// ---- varimax ----

double varimax_criterion(const Mat& loadings) {
  const double p = static_cast<double>(loadings.rows);
  double crit = 0.0;
  for (std::size_t j = 0; j < loadings.cols; ++j) {
    double s2 = 0.0, s4 = 0.0;
    for (std::size_t i = 0; i < loadings.rows; ++i) {
      const double sq = loadings.at(i, j) * loadings.at(i, j);
      s2 += sq;
      s4 += sq * sq;
    }
    crit += s4 - s2 * s2 / p;
  }
  return crit;
}

VarimaxResult varimax(const Mat& loadings, double tol, std::size_t max_iter) {
  if (loadings.cols == 0 || loadings.rows == 0)
    throw NumericError("varimax: empty loadings");
  VarimaxResult result;
  result.rotated = loadings;
  result.rotation = Mat(loadings.cols, loadings.cols);
  for (std::size_t i = 0; i < loadings.cols; ++i) result.rotation.at(i, i) = 1.0;
  result.criterion_history.push_back(varimax_criterion(result.rotated));
  if (loadings.cols == 1) return result;  // identity rotation

  const std::size_t p = loadings.rows, nf = loadings.cols;
  Mat& l = result.rotated;
  double crit = result.criterion_history.back();
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool rotated_any = false;
    for (std::size_t j = 0; j + 1 < nf; ++j)
      for (std::size_t k = j + 1; k < nf; ++k) {
        double a = 0, b = 0, c = 0, d = 0;
        for (std::size_t i = 0; i < p; ++i) {
          const double u = l.at(i, j) * l.at(i, j) - l.at(i, k) * l.at(i, k);
          const double v = 2.0 * l.at(i, j) * l.at(i, k);
          a += u;
          b += v;
          c += u * u - v * v;
          d += u * v;
        }
        const double pn = static_cast<double>(p);
        const double num = 2.0 * (pn * d - a * b);
        const double den = pn * c + (b * b - a * a);
        if (std::abs(num) <= 1e-12 * std::abs(den)) continue;
        rotated_any = true;
        const double angle = 0.25 * std::atan2(num, den);
        const double cs = std::cos(angle), sn = std::sin(angle);
        for (std::size_t i = 0; i < p; ++i) {
          const double lj = l.at(i, j), lk = l.at(i, k);
          l.at(i, j) = cs * lj + sn * lk;
          l.at(i, k) = -sn * lj + cs * lk;
        }
        for (std::size_t i = 0; i < nf; ++i) {
          const double rj = result.rotation.at(i, j), rk = result.rotation.at(i, k);
          result.rotation.at(i, j) = cs * rj + sn * rk;
          result.rotation.at(i, k) = -sn * rj + cs * rk;
        }
      }
    const double new_crit = varimax_criterion(l);
    result.criterion_history.push_back(new_crit);
    const bool converged = new_crit - crit < tol * std::max(1.0, std::abs(new_crit));
    crit = new_crit;
    if (!rotated_any || converged) break;
  }

  // Sign convention to make the result deterministic.
  for (std::size_t j = 0; j < nf; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < p; ++i)
      if (std::abs(l.at(i, j)) > std::abs(l.at(arg, j))) arg = i;
    if (l.at(arg, j) < 0) {
      for (std::size_t i = 0; i < p; ++i) l.at(i, j) *= -1.0;
      for (std::size_t i = 0; i < nf; ++i) result.rotation.at(i, j) *= -1.0;
    }
  }
  return result;
}

Cos2Result cos2_contributions(const PcaResult& result) {
  Cos2Result out;
  const std::size_t rows = result.scores.rows, k = result.scores.cols;
  out.cos2.resize(rows);
  out.shaded.assign(rows, false);
  for (std::size_t i = 0; i < rows; ++i) {
    const double denom = result.row_sq_norm[i];
    if (denom <= 1e-24) {
      out.cos2[i] = std::nullopt;  // instance sits at the centroid
      continue;
    }
    std::vector<double> c(k);
    for (std::size_t j = 0; j < k; ++j)
      c[j] = result.scores.at(i, j) * result.scores.at(i, j) / denom;
    double first_two = c[0] + (k > 1 ? c[1] : 0.0);
    out.shaded[i] = first_two < 0.5;
    out.cos2[i] = std::move(c);
  }
  return out;
}

}  // namespace tqe::analysis
