#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tqe/tensor.hpp"

namespace tqe::embeddings {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

/// Token -> row mapping over a trainable [|V|, dim] matrix. Row 0 is the PAD
/// row (all zero, never looked up for real tokens), row 1 the UNK row.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::size_t> vocab;
  ad::Tensor matrix;
  std::size_t pad_index = 0;
  std::size_t unk_index = 1;
  std::size_t duplicate_count = 0;
  bool lowercase = false;

  std::size_t vocab_size() const { return matrix.defined() ? matrix.rows() : 0; }
  /// Index for a token; out-of-vocabulary tokens map to UNK.
  std::size_t index_of(const std::string& token) const;
  /// Tokens ordered by index, including the reserved entries.
  std::vector<std::string> ordered_tokens() const;
};

/// Text format: one line per token, "token v1 v2 ... v_dim" space-separated.
/// A first line of exactly two integer fields is a count/dim header and is
/// skipped. Duplicate tokens keep the first row and bump duplicate_count.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                               std::uint64_t seed, bool lowercase = false);

/// Table over an explicit vocabulary with seeded uniform(-0.05,0.05) rows;
/// used when no pre-trained file is supplied (synthetic runs).
EmbeddingTable random_table(std::span<const std::string> tokens, std::size_t dim,
                            std::uint64_t seed, bool lowercase = false);

/// Rebuild a table from an ordered token list plus raw row data (checkpoints).
EmbeddingTable table_from_rows(const std::vector<std::string>& ordered_tokens,
                               std::size_t dim, std::vector<double> rows, bool lowercase);

/// [n, dim] tensor of the tokens' rows; participates in backward, and the
/// gradient lands only on the used rows.
ad::Tensor lookup(const EmbeddingTable& table, std::span<const std::string> tokens);

}  // namespace tqe::embeddings
