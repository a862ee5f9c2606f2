#include "tqe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "tqe/errors.hpp"

namespace tqe::eval {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("pearson: length mismatch " + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()));
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("pearson: need at least 2 samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share the mean of ranks i+1..j+1.
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("spearman: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double mse(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("mse: length mismatch " + std::to_string(pred.size()) +
                                " vs " + std::to_string(gold.size()));
  if (pred.empty()) throw std::invalid_argument("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gold[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

namespace {

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "   n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.4f", *v);
  return buf;
}

}  // namespace

std::string EvalReport::table() const {
  std::string out = "Target       r       rho       MSE\n";
  static constexpr std::array<const char*, data::kAspects> kRow{"UT", "TS", "IW", "TM"};
  for (std::size_t a = 0; a < data::kAspects; ++a) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-6s %s  %s  %8.2f\n", kRow[a],
                  fmt_metric(aspects[a].pearson).c_str(), fmt_metric(aspects[a].spearman).c_str(),
                  aspects[a].mse);
    out += buf;
  }
  return out;
}

std::string EvalReport::json() const {
  nlohmann::json j;
  j["sample_count"] = sample_count;
  j["clamped"] = clamped;
  for (std::size_t a = 0; a < data::kAspects; ++a) {
    nlohmann::json m;
    if (aspects[a].pearson) m["pearson"] = *aspects[a].pearson; else m["pearson"] = nullptr;
    if (aspects[a].spearman) m["spearman"] = *aspects[a].spearman; else m["spearman"] = nullptr;
    m["mse"] = aspects[a].mse;
    j["aspects"][data::kAspectNames[a]] = m;
  }
  return j.dump(2);
}

EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& config,
                    const data::Corpus& corpus, bool clamped) {
  if (corpus.empty()) throw ConfigError("evaluate: empty test set");
  std::array<std::vector<double>, data::kAspects> preds, golds;
  const auto batches = data::make_batches(corpus, 64, 0, false);
  for (const auto& batch : batches) {
    const auto batch_preds = model::predict(params, config, batch);
    for (std::size_t b = 0; b < batch.size(); ++b)
      for (std::size_t a = 0; a < data::kAspects; ++a) {
        preds[a].push_back(clamped ? batch_preds[b].clamped[a] : batch_preds[b].raw[a]);
        golds[a].push_back(batch.gold[b][a]);
      }
  }
  EvalReport report;
  report.sample_count = corpus.size();
  report.clamped = clamped;
  for (std::size_t a = 0; a < data::kAspects; ++a) {
    if (corpus.size() >= 2) {
      report.aspects[a].pearson = pearson(preds[a], golds[a]);
      report.aspects[a].spearman = spearman(preds[a], golds[a]);
    }
    report.aspects[a].mse = mse(preds[a], golds[a]);
  }
  return report;
}

}  // namespace tqe::eval
