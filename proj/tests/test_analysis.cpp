#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "tqe/analysis.hpp"
#include "tqe/errors.hpp"
#include "tqe/rng.hpp"

using namespace tqe;
using analysis::Mat;

namespace {

analysis::RatingsMatrix two_annotators(const std::vector<std::pair<double, double>>& pairs) {
  analysis::RatingsMatrix m;
  for (const auto& [a, b] : pairs) m.values.push_back({a, b});
  return m;
}

// Independent oracle: enumerate every ordered pairable pair for both
// disagreement sums, interval metric.
double alpha_oracle_interval(const std::vector<std::vector<double>>& units) {
  double n = 0;
  std::vector<double> pooled;
  for (const auto& u : units) {
    n += static_cast<double>(u.size());
    pooled.insert(pooled.end(), u.begin(), u.end());
  }
  double d_obs = 0;
  for (const auto& u : units) {
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j) s += (u[i] - u[j]) * (u[i] - u[j]);
    d_obs += s / static_cast<double>(u.size() - 1);
  }
  d_obs /= n;
  double d_exp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = 0; j < pooled.size(); ++j)
      if (i != j) d_exp += (pooled[i] - pooled[j]) * (pooled[i] - pooled[j]);
  d_exp /= n * (n - 1.0);
  return 1.0 - d_obs / d_exp;
}

Mat random_mat(std::size_t r, std::size_t c, DetRng& rng) {
  Mat m(r, c);
  for (double& v : m.a) v = rng.uniform(-3, 3);
  return m;
}

}  // namespace

TEST_CASE("alpha is exactly 1 for perfect agreement on distinct values") {
  const auto m = two_annotators({{1, 1}, {2, 2}, {3, 3}});
  const auto alpha = analysis::krippendorff_alpha(m);
  REQUIRE(alpha.has_value());
  CHECK(*alpha == 1.0);
}

TEST_CASE("alpha undefined when all ratings are identical") {
  const auto m = two_annotators({{2, 2}, {2, 2}, {2, 2}});
  CHECK(!analysis::krippendorff_alpha(m).has_value());
}

TEST_CASE("alpha undefined with fewer than 2 pairable values") {
  analysis::RatingsMatrix m;
  m.values.push_back({1.0, std::nullopt});
  m.values.push_back({std::nullopt, 2.0});
  CHECK(!analysis::krippendorff_alpha(m).has_value());
}

TEST_CASE("alpha matches the hand-enumerated 4-unit interval example") {
  const std::vector<std::vector<double>> units{{1, 2}, {2, 2}, {3, 4}, {4, 4}};
  const auto m = two_annotators({{1, 2}, {2, 2}, {3, 4}, {4, 4}});
  const auto alpha = analysis::krippendorff_alpha(m);
  REQUIRE(alpha.has_value());
  const double expected = alpha_oracle_interval(units);
  CHECK(std::abs(*alpha - expected) < 1e-12);
  // hand value: D_o = 0.5, D_e = 152/56
  CHECK(*alpha == doctest::Approx(1.0 - 0.5 / (152.0 / 56.0)).epsilon(1e-12));
}

TEST_CASE("alpha skips missing cells") {
  analysis::RatingsMatrix m;
  m.values.push_back({1.0, 1.0, std::nullopt});
  m.values.push_back({2.0, std::nullopt, 2.0});
  m.values.push_back({std::nullopt, 4.0, 3.0});
  m.values.push_back({5.0, std::nullopt, std::nullopt});  // unpairable: dropped
  const auto alpha = analysis::krippendorff_alpha(m);
  REQUIRE(alpha.has_value());
  const double expected = alpha_oracle_interval({{1, 1}, {2, 2}, {4, 3}});
  CHECK(std::abs(*alpha - expected) < 1e-12);
}

TEST_CASE("alpha affine invariance under the interval metric") {
  DetRng rng(201);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<double, double>> pairs;
    for (int u = 0; u < 6; ++u) pairs.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
    const auto base = analysis::krippendorff_alpha(two_annotators(pairs));
    REQUIRE(base.has_value());
    CHECK(*base <= 1.0);

    std::vector<std::pair<double, double>> scaled;
    for (auto [a, b] : pairs) scaled.push_back({-2.5 * a + 7.0, -2.5 * b + 7.0});
    const auto transformed = analysis::krippendorff_alpha(two_annotators(scaled));
    REQUIRE(transformed.has_value());
    CHECK(std::abs(*base - *transformed) < 1e-9);
  }
}

TEST_CASE("alpha nominal and ordinal variants behave sanely") {
  const auto perfect = two_annotators({{1, 1}, {2, 2}, {3, 3}});
  analysis::RatingsMatrix nominal = perfect;
  nominal.metric = analysis::AgreementMetric::kNominal;
  CHECK(*analysis::krippendorff_alpha(nominal) == 1.0);

  analysis::RatingsMatrix ordinal = two_annotators({{1, 2}, {2, 1}, {3, 3}, {1, 3}});
  ordinal.metric = analysis::AgreementMetric::kOrdinal;
  const auto a = analysis::krippendorff_alpha(ordinal);
  REQUIRE(a.has_value());
  CHECK(*a <= 1.0);
}

TEST_CASE("describe: constant and 1..4 samples") {
  const auto c = analysis::describe({5, 5, 5});
  CHECK(c.min == 5.0);
  CHECK(c.q1 == 5.0);
  CHECK(c.median == 5.0);
  CHECK(c.mean == 5.0);
  CHECK(c.q3 == 5.0);
  CHECK(c.max == 5.0);

  const auto d = analysis::describe({4, 1, 3, 2});
  CHECK(d.min == 1.0);
  CHECK(d.median == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(d.mean == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(d.q1 == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(d.q3 == doctest::Approx(3.25).epsilon(1e-15));
  CHECK(d.max == 4.0);
}

TEST_CASE("score_descriptives table mirrors the aspect layout") {
  const auto corpus = data::gen_synthetic(50, 3);
  const auto desc = analysis::score_descriptives(corpus);
  const std::string table = desc.table();
  for (const char* row :
       {"Min.", "1st Quartile", "Median", "Mean", "3rd Quartile", "Max."})
    CHECK(table.find(row) != std::string::npos);
  for (const char* col : {"UT", "TS", "IW", "TM", "Score"})
    CHECK(table.find(col) != std::string::npos);
  // total column consistent with the aspect sums
  CHECK(desc.total.max <= desc.aspects[0].max + desc.aspects[1].max + desc.aspects[2].max +
                              desc.aspects[3].max + 1e-9);
}

TEST_CASE("pca on rank-1 two-column data") {
  Mat m(4, 2);
  const std::vector<double> xs{1, 2, 3, -1};
  for (std::size_t i = 0; i < 4; ++i) {
    m.at(i, 0) = xs[i];
    m.at(i, 1) = xs[i];
  }
  const auto result = analysis::pca(m, 3);
  CHECK(result.rank_deficient);
  REQUIRE(result.components.cols >= 1);
  CHECK(result.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(result.components.at(0, 0)) == doctest::Approx(inv_sqrt2).epsilon(1e-9));
  CHECK(std::abs(result.components.at(1, 0)) == doctest::Approx(inv_sqrt2).epsilon(1e-9));
  // sign convention: largest-magnitude loading positive
  CHECK(result.components.at(0, 0) > 0.0);
}

TEST_CASE("pca scores have zero column means") {
  DetRng rng(202);
  const Mat m = random_mat(12, 5, rng);
  const auto result = analysis::pca(m, 3);
  for (std::size_t j = 0; j < result.scores.cols; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < result.scores.rows; ++i) mean += result.scores.at(i, j);
    CHECK(std::abs(mean / static_cast<double>(result.scores.rows)) < 1e-12);
  }
}

TEST_CASE("pca reconstruction from all components equals the centered data") {
  DetRng rng(203);
  const Mat m = random_mat(9, 5, rng);
  const auto result = analysis::pca(m, 5);
  REQUIRE(result.components.cols == 5);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) {
      double rec = 0;
      for (std::size_t k = 0; k < 5; ++k)
        rec += result.scores.at(i, k) * result.components.at(j, k);
      const double centered = m.at(i, j) - result.column_means[j];
      CHECK(std::abs(rec - centered) < 1e-9);
    }
}

TEST_CASE("pca components are orthonormal and ratios ordered") {
  DetRng rng(204);
  const Mat m = random_mat(20, 6, rng);
  const auto r = analysis::pca(m, 4);
  for (std::size_t a = 0; a < r.components.cols; ++a)
    for (std::size_t b = 0; b < r.components.cols; ++b) {
      double dot = 0;
      for (std::size_t i = 0; i < r.components.rows; ++i)
        dot += r.components.at(i, a) * r.components.at(i, b);
      CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-9);
    }
  double total = 0;
  for (std::size_t i = 0; i + 1 < r.explained_ratio.size(); ++i)
    CHECK(r.explained_ratio[i] >= r.explained_ratio[i + 1]);
  for (double x : r.explained_ratio) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
    total += x;
  }
  CHECK(total <= 1.0 + 1e-12);
}

TEST_CASE("first component beats 100 random directions") {
  DetRng rng(205);
  const Mat m = random_mat(25, 6, rng);
  const auto r = analysis::pca(m, 1);
  const double top_var = r.eigenvalues[0];

  std::vector<double> means(m.cols, 0.0);
  for (std::size_t j = 0; j < m.cols; ++j) {
    for (std::size_t i = 0; i < m.rows; ++i) means[j] += m.at(i, j);
    means[j] /= static_cast<double>(m.rows);
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> dir(m.cols);
    double norm = 0;
    for (double& v : dir) {
      v = rng.uniform(-1, 1);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
    double var = 0;
    for (std::size_t i = 0; i < m.rows; ++i) {
      double proj = 0;
      for (std::size_t j = 0; j < m.cols; ++j) proj += (m.at(i, j) - means[j]) * dir[j];
      var += proj * proj;
    }
    var /= static_cast<double>(m.rows - 1);
    CHECK(top_var >= var - 1e-9);
  }
}

TEST_CASE("pca rejects degenerate inputs") {
  Mat one_row(1, 3);
  CHECK_THROWS_AS(analysis::pca(one_row, 2), NumericError);
}

TEST_CASE("varimax on perfect simple structure stays put") {
  Mat l(3, 2);
  l.at(0, 0) = 1;
  l.at(1, 1) = 1;
  l.at(2, 0) = 1;
  const auto r = analysis::varimax(l);
  // rotation is the identity up to column sign/permutation
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double v = std::abs(r.rotation.at(i, j));
      CHECK((v < 1e-6 || std::abs(v - 1.0) < 1e-6));
    }
  CHECK(analysis::varimax_criterion(r.rotated) >=
        analysis::varimax_criterion(l) - 1e-12);

  // grid oracle: the criterion peaks at angle 0 (mod 90 degrees)
  double best_angle = 0, best_crit = -1e99;
  for (int step = 0; step < 9000; ++step) {
    const double angle = step * (M_PI / 2) / 9000.0;
    Mat rot(3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      rot.at(i, 0) = std::cos(angle) * l.at(i, 0) + std::sin(angle) * l.at(i, 1);
      rot.at(i, 1) = -std::sin(angle) * l.at(i, 0) + std::cos(angle) * l.at(i, 1);
    }
    const double crit = analysis::varimax_criterion(rot);
    if (crit > best_crit) {
      best_crit = crit;
      best_angle = angle;
    }
  }
  CHECK(best_angle == doctest::Approx(0.0).epsilon(1e-3));
}

TEST_CASE("varimax rotation is orthogonal and preserves communalities") {
  DetRng rng(206);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat l = random_mat(11, 3, rng);
    const auto r = analysis::varimax(l);

    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        double dot = 0;
        for (std::size_t i = 0; i < 3; ++i)
          dot += r.rotation.at(i, a) * r.rotation.at(i, b);
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-9);
      }

    for (std::size_t i = 0; i < l.rows; ++i) {
      double before = 0, after = 0;
      for (std::size_t j = 0; j < l.cols; ++j) {
        before += l.at(i, j) * l.at(i, j);
        after += r.rotated.at(i, j) * r.rotated.at(i, j);
      }
      CHECK(std::abs(before - after) < 1e-9);
    }

    // criterion never decreases across sweeps
    for (std::size_t s = 0; s + 1 < r.criterion_history.size(); ++s)
      CHECK(r.criterion_history[s + 1] >= r.criterion_history[s] - 1e-12);

    // rotated = loadings * rotation
    for (std::size_t i = 0; i < l.rows; ++i)
      for (std::size_t j = 0; j < l.cols; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < l.cols; ++k) acc += l.at(i, k) * r.rotation.at(k, j);
        CHECK(std::abs(acc - r.rotated.at(i, j)) < 1e-9);
      }
  }
}

TEST_CASE("varimax criterion reaches the angle-grid maximum for 2 components") {
  DetRng rng(207);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat l = random_mat(7, 2, rng);
    const auto r = analysis::varimax(l);
    const double found = analysis::varimax_criterion(r.rotated);

    double best = -1e99;
    for (int step = 0; step < 20000; ++step) {
      const double angle = step * (M_PI / 2) / 20000.0;
      Mat rot(7, 2);
      for (std::size_t i = 0; i < 7; ++i) {
        rot.at(i, 0) = std::cos(angle) * l.at(i, 0) + std::sin(angle) * l.at(i, 1);
        rot.at(i, 1) = -std::sin(angle) * l.at(i, 0) + std::cos(angle) * l.at(i, 1);
      }
      best = std::max(best, analysis::varimax_criterion(rot));
    }
    CHECK(std::abs(found - best) < 1e-4);
  }
}

TEST_CASE("varimax with a single component is the identity") {
  DetRng rng(208);
  const Mat l = random_mat(5, 1, rng);
  const auto r = analysis::varimax(l);
  CHECK(r.rotation.at(0, 0) == 1.0);
  for (std::size_t i = 0; i < 5; ++i) CHECK(r.rotated.at(i, 0) == l.at(i, 0));
}

TEST_CASE("cos2 from a hand-built result") {
  analysis::PcaResult r;
  r.scores = Mat(4, 2);
  // instance 0: exactly on dim 1
  r.scores.at(0, 0) = 2.0;
  // instance 1: first-two cos2 exactly 0.5 -> NOT shaded (strict less-than)
  r.scores.at(1, 0) = 1.0;
  r.scores.at(1, 1) = 1.0;
  // instance 2: below the threshold -> shaded
  r.scores.at(2, 0) = 0.5;
  r.scores.at(2, 1) = 0.5;
  // instance 3: centroid
  r.row_sq_norm = {4.0, 4.0, 4.0, 0.0};
  const auto c = analysis::cos2_contributions(r);

  REQUIRE(c.cos2[0].has_value());
  CHECK((*c.cos2[0])[0] == doctest::Approx(1.0));
  CHECK((*c.cos2[0])[1] == 0.0);
  CHECK(!c.shaded[0]);

  CHECK((*c.cos2[1])[0] + (*c.cos2[1])[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(!c.shaded[1]);  // exactly 0.5 is not shaded

  CHECK(c.shaded[2]);

  CHECK(!c.cos2[3].has_value());
}

TEST_CASE("cos2 values per instance sum to 1 over all dims") {
  DetRng rng(209);
  const Mat m = random_mat(10, 4, rng);
  const auto r = analysis::pca(m, 4);
  const auto c = analysis::cos2_contributions(r);
  for (std::size_t i = 0; i < 10; ++i) {
    REQUIRE(c.cos2[i].has_value());
    double total = 0;
    for (double v : *c.cos2[i]) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("an instance at the centroid has undefined cos2") {
  Mat m(3, 3);
  // third row is the mean of the other two, hence exactly the column means
  const std::vector<double> a{0, 2, 4}, b{2, 0, 2};
  for (std::size_t j = 0; j < 3; ++j) {
    m.at(0, j) = a[j];
    m.at(1, j) = b[j];
    m.at(2, j) = (a[j] + b[j]) / 2.0;
  }
  const auto r = analysis::pca(m, 2);
  const auto c = analysis::cos2_contributions(r);
  CHECK(c.cos2[0].has_value());
  CHECK(c.cos2[1].has_value());
  CHECK(!c.cos2[2].has_value());
}

TEST_CASE("error profile CSV parsing") {
  namespace fs = std::filesystem;
  const auto write = [](const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << content;
    return p;
  };
  const std::string header =
      "id,label,mistranslation,omission,awkward,punctuation,undertranslation,"
      "unidiomatic,grammar,addition,spelling,terminology,untranslated";

  const auto good = write("prof_ok.csv", header + "\nht1,HT,1,0,2,0,1,0,0,0,0,1,0\n"
                                                  "mt1,MT,3,1,0,2,0,1,4,0,1,0,2\n");
  const auto profiles = analysis::parse_error_profiles(good);
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[0].id == "ht1");
  CHECK(profiles[0].label == "HT");
  CHECK(profiles[0].counts[0] == 1.0);
  CHECK(profiles[1].counts[6] == 4.0);

  const auto bad_header = write("prof_bad_header.csv", "id,label,foo\nx,HT,1\n");
  CHECK_THROWS_AS(analysis::parse_error_profiles(bad_header), ParseError);

  const auto bad_count = write("prof_bad_count.csv", header + "\nx,HT,1,2,3\n");
  CHECK_THROWS_AS(analysis::parse_error_profiles(bad_count), ParseError);

  const auto negative = write("prof_neg.csv", header + "\nx,HT,-1,0,0,0,0,0,0,0,0,0,0\n");
  CHECK_THROWS_AS(analysis::parse_error_profiles(negative), ParseError);

  const auto frac = write("prof_frac.csv", header + "\nx,HT,1.5,0,0,0,0,0,0,0,0,0,0\n");
  CHECK_THROWS_AS(analysis::parse_error_profiles(frac), ParseError);

  const auto bad_label = write("prof_label.csv", header + "\nx,XX,1,0,0,0,0,0,0,0,0,0,0\n");
  CHECK_THROWS_AS(analysis::parse_error_profiles(bad_label), ParseError);
}
