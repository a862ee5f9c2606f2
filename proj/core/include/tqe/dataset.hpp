#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tqe::data {

inline constexpr std::size_t kAspects = 4;
inline constexpr std::array<const char*, kAspects> kAspectNames{"ut", "ts", "iw", "tm"};
inline constexpr std::array<double, kAspects> kAspectMax{35.0, 25.0, 25.0, 15.0};

/// The four rubric components. Bounds: UT<=35, TS<=25, IW<=25, TM<=15, all >=0.
struct ScoreVector {
  double ut = 0, ts = 0, iw = 0, tm = 0;

  double total() const { return ut + ts + iw + tm; }
  double operator[](std::size_t aspect) const;
  double& operator[](std::size_t aspect);
  /// Throws ParseError naming the violated bound; context prefixes the message.
  void validate(const std::string& context) const;
};

struct Example {
  std::vector<std::string> source_tokens;
  std::vector<std::string> target_tokens;
  ScoreVector gold;
  std::string id;
};

struct Corpus {
  std::vector<Example> examples;
  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

/// One line per pair: source<TAB>target<TAB>ut<TAB>ts<TAB>iw<TAB>tm,
/// tokens space-separated inside the text fields. Scores validated on read.
Corpus parse_tsv(const std::filesystem::path& path);
Corpus parse_tsv_stream(std::istream& in, const std::string& name);
void serialize_tsv(const Corpus& corpus, std::ostream& out);

/// Seeded shuffle, then prefix/suffix split into (train, test).
std::pair<Corpus, Corpus> split(const Corpus& corpus, std::size_t n_train, std::uint64_t seed);

struct Batch {
  /// Token sequences right-padded with the pad token to the batch max per side.
  std::vector<std::vector<std::string>> source_tokens;
  std::vector<std::vector<std::string>> target_tokens;
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;
  std::vector<ScoreVector> gold;
  std::vector<std::string> ids;

  std::size_t size() const { return gold.size(); }
};

std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle);

/// Deterministic pseudo-pairs over a small closed vocabulary. Gold scores are
/// functions of constructed token overlap and length ratio, so a model can
/// actually learn them; every score stays inside its rubric bound.
Corpus gen_synthetic(std::size_t n, std::uint64_t seed);

}  // namespace tqe::data
