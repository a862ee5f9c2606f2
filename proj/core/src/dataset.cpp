#include "tqe/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "tqe/errors.hpp"
#include "tqe/rng.hpp"
#include "tqe/util.hpp"

namespace tqe::data {

double ScoreVector::operator[](std::size_t aspect) const {
  switch (aspect) {
    case 0: return ut;
    case 1: return ts;
    case 2: return iw;
    case 3: return tm;
    default: throw std::out_of_range("ScoreVector: aspect index");
  }
}

double& ScoreVector::operator[](std::size_t aspect) {
  switch (aspect) {
    case 0: return ut;
    case 1: return ts;
    case 2: return iw;
    case 3: return tm;
    default: throw std::out_of_range("ScoreVector: aspect index");
  }
}

void ScoreVector::validate(const std::string& context) const {
  for (std::size_t a = 0; a < kAspects; ++a) {
    const double v = (*this)[a];
    if (!(v >= 0.0 && v <= kAspectMax[a]))
      throw ParseError(context + ": score " + kAspectNames[a] + "=" + format_double(v) +
                       " outside [0," + format_double(kAspectMax[a]) + "]");
  }
}

namespace {

double parse_score(const std::string& field, const std::string& context) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError(context + ": non-numeric score '" + field + "'");
  return v;
}

std::string line_id(std::size_t line_no) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ex-%06zu", line_no);
  return buf;
}

}  // namespace

Corpus parse_tsv_stream(std::istream& in, const std::string& name) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string context = name + ":" + std::to_string(line_no);
    const auto fields = split_on(line, '\t');
    if (fields.size() != 6)
      throw ParseError(context + ": expected 6 tab-separated fields, got " +
                       std::to_string(fields.size()));
    Example ex;
    ex.source_tokens = split_ws(fields[0]);
    ex.target_tokens = split_ws(fields[1]);
    if (ex.source_tokens.empty()) throw ParseError(context + ": empty source text");
    if (ex.target_tokens.empty()) throw ParseError(context + ": empty target text");
    ex.gold.ut = parse_score(fields[2], context);
    ex.gold.ts = parse_score(fields[3], context);
    ex.gold.iw = parse_score(fields[4], context);
    ex.gold.tm = parse_score(fields[5], context);
    ex.gold.validate(context);
    ex.id = line_id(corpus.examples.size() + 1);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

Corpus parse_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open corpus file: " + path.string());
  return parse_tsv_stream(in, path.filename().string());
}

void serialize_tsv(const Corpus& corpus, std::ostream& out) {
  for (const Example& ex : corpus.examples) {
    for (std::size_t i = 0; i < ex.source_tokens.size(); ++i) {
      if (i) out << ' ';
      out << ex.source_tokens[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < ex.target_tokens.size(); ++i) {
      if (i) out << ' ';
      out << ex.target_tokens[i];
    }
    out << '\t' << format_double(ex.gold.ut) << '\t' << format_double(ex.gold.ts) << '\t'
        << format_double(ex.gold.iw) << '\t' << format_double(ex.gold.tm) << '\n';
  }
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, std::size_t n_train, std::uint64_t seed) {
  if (n_train == 0 || n_train >= corpus.size())
    throw ConfigError("split: n_train=" + std::to_string(n_train) +
                      " must be in (0, " + std::to_string(corpus.size()) + ")");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  DetRng rng(seed);
  rng.shuffle(order);
  Corpus train, test;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train : test).examples.push_back(corpus.examples[order[i]]);
  return {std::move(train), std::move(test)};
}

std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle) {
  if (corpus.empty()) throw ConfigError("make_batches: empty corpus");
  if (batch_size == 0) throw ConfigError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    DetRng rng(seed);
    rng.shuffle(order);
  }
  static const std::string kPad = "<pad>";
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    Batch b;
    std::size_t max_src = 0, max_tgt = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const Example& ex = corpus.examples[order[start + i]];
      max_src = std::max(max_src, ex.source_tokens.size());
      max_tgt = std::max(max_tgt, ex.target_tokens.size());
    }
    for (std::size_t i = 0; i < count; ++i) {
      const Example& ex = corpus.examples[order[start + i]];
      auto src = ex.source_tokens;
      auto tgt = ex.target_tokens;
      b.source_lengths.push_back(src.size());
      b.target_lengths.push_back(tgt.size());
      src.resize(max_src, kPad);
      tgt.resize(max_tgt, kPad);
      b.source_tokens.push_back(std::move(src));
      b.target_tokens.push_back(std::move(tgt));
      b.gold.push_back(ex.gold);
      b.ids.push_back(ex.id);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

// Paired source/target vocabulary; index i of the target list "translates"
// index i of the source list. The tail entries past kPaired are noise-only.
constexpr std::size_t kPaired = 24;
constexpr std::array<const char*, 32> kSrcVocab{
    "trade",  "growth", "market", "policy", "price",  "bank",   "deal",   "report",
    "tax",    "labor",  "export", "import", "supply", "demand", "rate",   "debt",
    "firm",   "asset",  "fund",   "risk",   "stock",  "bond",   "loan",   "budget",
    "note",   "draft",  "memo",   "annex",  "item",   "clause", "page",   "title"};
constexpr std::array<const char*, 32> kTgtVocab{
    "maoyi",  "zengzhang", "shichang", "zhengce", "jiage",   "yinhang", "jiaoyi", "baogao",
    "shui",   "laogong",   "chukou",   "jinkou",  "gongying", "xuqiu",  "lilv",   "zhaiwu",
    "gongsi", "zichan",    "jijin",    "fengxian", "gupiao",  "zhaiquan", "daikuan", "yusuan",
    "beizhu", "caogao",    "jiyao",    "fujian",  "tiaomu",   "tiaokuan", "yemian", "biaoti"};

}  // namespace

Corpus gen_synthetic(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("gen_synthetic: n must be >= 1");
  DetRng rng(derive_seed(seed, "synthetic"));
  Corpus corpus;
  corpus.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    const std::size_t src_len = 3 + rng.below(8);  // 3..10
    std::vector<std::size_t> src_ids(src_len);
    for (auto& id : src_ids) id = rng.below(kPaired);
    // Coverage level drawn per example so translated fractions span [0,1].
    const double coverage = rng.uniform();
    std::vector<std::size_t> tgt_ids;
    std::size_t matched = 0;
    for (std::size_t id : src_ids) {
      if (rng.uniform() < coverage) {
        tgt_ids.push_back(id);
        ++matched;
      }
    }
    const std::size_t noise = rng.below(5);  // 0..4 filler tokens
    for (std::size_t k = 0; k < noise; ++k) {
      const std::size_t pos = rng.below(tgt_ids.size() + 1);
      tgt_ids.insert(tgt_ids.begin() + pos, kPaired + rng.below(kSrcVocab.size() - kPaired));
    }
    if (tgt_ids.empty()) tgt_ids.push_back(kPaired + rng.below(kSrcVocab.size() - kPaired));

    const double overlap = static_cast<double>(matched) / static_cast<double>(src_len);
    const double ratio = static_cast<double>(tgt_ids.size()) / static_cast<double>(src_len);
    const double ratio_fit = std::max(0.0, 1.0 - std::abs(ratio - 1.0));
    std::size_t terms_in_src = 0, terms_matched = 0;
    for (std::size_t j = 0; j < src_ids.size(); ++j) {
      if (src_ids[j] >= kPaired / 2) continue;  // first half of the vocab are "terms"
      ++terms_in_src;
    }
    for (std::size_t id : tgt_ids)
      if (id < kPaired / 2) ++terms_matched;
    const double term_overlap =
        terms_in_src == 0 ? overlap
                          : std::min(1.0, static_cast<double>(terms_matched) /
                                              static_cast<double>(terms_in_src));

    ex.gold.ut = kAspectMax[0] * overlap;
    ex.gold.ts = kAspectMax[1] * term_overlap;
    ex.gold.iw = kAspectMax[2] * ratio_fit;
    ex.gold.tm = kAspectMax[3] * (0.5 * overlap + 0.5 * ratio_fit);

    for (std::size_t id : src_ids) ex.source_tokens.emplace_back(kSrcVocab[id]);
    for (std::size_t id : tgt_ids) ex.target_tokens.emplace_back(kTgtVocab[id]);
    ex.id = line_id(i + 1);
    ex.gold.validate("gen_synthetic " + ex.id);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace tqe::data
