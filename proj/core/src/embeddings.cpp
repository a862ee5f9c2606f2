#include "tqe/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "tqe/errors.hpp"
#include "tqe/rng.hpp"
#include "tqe/util.hpp"

namespace tqe::embeddings {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_integer_field(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

std::vector<double> unk_row(std::size_t dim, std::uint64_t seed) {
  DetRng rng(derive_seed(seed, "unk"));
  std::vector<double> row(dim);
  for (double& v : row) v = rng.uniform(-0.05, 0.05);
  return row;
}

}  // namespace

std::size_t EmbeddingTable::index_of(const std::string& token) const {
  const auto it = vocab.find(lowercase ? lower(token) : token);
  return it == vocab.end() ? unk_index : it->second;
}

std::vector<std::string> EmbeddingTable::ordered_tokens() const {
  std::vector<std::string> out(vocab_size());
  for (const auto& [tok, idx] : vocab) out[idx] = tok;
  return out;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                               std::uint64_t seed, bool lowercase) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open embeddings file: " + path.string());
  if (expected_dim == 0) throw ConfigError("load_embeddings: expected_dim must be positive");

  EmbeddingTable table;
  table.dim = expected_dim;
  table.lowercase = lowercase;
  table.vocab.emplace(kPadToken, table.pad_index);
  table.vocab.emplace(kUnkToken, table.unk_index);

  std::vector<double> rows(2 * expected_dim, 0.0);  // PAD zeros + UNK placeholder
  const auto unk = unk_row(expected_dim, seed);
  std::copy(unk.begin(), unk.end(), rows.begin() + expected_dim);

  std::string line;
  std::size_t line_no = 0;
  const std::string name = path.filename().string();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_ws(line);
    if (line_no == 1 && fields.size() == 2 && is_integer_field(fields[0]) &&
        is_integer_field(fields[1]))
      continue;  // count/dim header
    if (fields.size() != expected_dim + 1)
      throw ParseError(name + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(expected_dim + 1) + " fields (token + " +
                       std::to_string(expected_dim) + " floats), got " +
                       std::to_string(fields.size()));
    std::string token = lowercase ? lower(fields[0]) : fields[0];
    if (table.vocab.count(token)) {
      ++table.duplicate_count;
      continue;
    }
    const std::size_t index = rows.size() / expected_dim;
    for (std::size_t i = 0; i < expected_dim; ++i) {
      double v = 0.0;
      const std::string& f = fields[i + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw ParseError(name + ":" + std::to_string(line_no) + ": bad float '" + f + "'");
      rows.push_back(v);
    }
    table.vocab.emplace(std::move(token), index);
  }
  const std::size_t vocab_rows = rows.size() / expected_dim;
  table.matrix = ad::Tensor::param({vocab_rows, expected_dim}, std::move(rows));
  return table;
}

EmbeddingTable random_table(std::span<const std::string> tokens, std::size_t dim,
                            std::uint64_t seed, bool lowercase) {
  if (dim == 0) throw ConfigError("random_table: dim must be positive");
  EmbeddingTable table;
  table.dim = dim;
  table.lowercase = lowercase;
  table.vocab.emplace(kPadToken, table.pad_index);
  table.vocab.emplace(kUnkToken, table.unk_index);

  std::vector<std::string> unique;
  for (const auto& t : tokens) {
    std::string token = lowercase ? lower(t) : t;
    if (!table.vocab.count(token)) {
      table.vocab.emplace(token, 2 + unique.size());
      unique.push_back(std::move(token));
    }
  }
  DetRng rng(derive_seed(seed, "embed-init"));
  std::vector<double> rows((2 + unique.size()) * dim, 0.0);
  const auto unk = unk_row(dim, seed);
  std::copy(unk.begin(), unk.end(), rows.begin() + dim);
  for (std::size_t i = 2 * dim; i < rows.size(); ++i) rows[i] = rng.uniform(-0.05, 0.05);
  table.matrix = ad::Tensor::param({2 + unique.size(), dim}, std::move(rows));
  return table;
}

EmbeddingTable table_from_rows(const std::vector<std::string>& ordered_tokens,
                               std::size_t dim, std::vector<double> rows, bool lowercase) {
  if (ordered_tokens.size() * dim != rows.size())
    throw ParseError("embedding table: token count does not match row data");
  EmbeddingTable table;
  table.dim = dim;
  table.lowercase = lowercase;
  for (std::size_t i = 0; i < ordered_tokens.size(); ++i)
    if (!table.vocab.emplace(ordered_tokens[i], i).second)
      throw ParseError("embedding table: duplicate token '" + ordered_tokens[i] + "'");
  if (!table.vocab.count(kPadToken) || table.vocab.at(kPadToken) != table.pad_index ||
      !table.vocab.count(kUnkToken) || table.vocab.at(kUnkToken) != table.unk_index)
    throw ParseError("embedding table: reserved tokens missing or misplaced");
  table.matrix = ad::Tensor::param({ordered_tokens.size(), dim}, std::move(rows));
  return table;
}

ad::Tensor lookup(const EmbeddingTable& table, std::span<const std::string> tokens) {
  std::vector<std::size_t> ids(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) ids[i] = table.index_of(tokens[i]);
  return ad::lookup_rows(table.matrix, ids);
}

}  // namespace tqe::embeddings
