#pragma once

#include <stdexcept>
#include <string>

namespace tqe {

/// Bad flags, unknown config keys, incompatible settings. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files (corpus, embeddings, ratings, checkpoints). CLI exit code 3.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runtime numeric failures (non-finite loss, degenerate inputs). CLI exit code 1.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tqe
