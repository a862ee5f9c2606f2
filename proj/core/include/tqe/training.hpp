#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tqe/dataset.hpp"
#include "tqe/model.hpp"
#include "tqe/tensor.hpp"

namespace tqe::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2_lambda = 1e-3;
  double dropout = 0.5;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Fraction of the training corpus held out for model selection;
  /// 0 means "use the training set itself as the dev set".
  double dev_fraction = 0.1;
  bool regularize_embeddings = false;
  bool regularize_biases = false;

  void validate() const;
};

struct AdamState {
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;  // parallel to the parameter list
  std::size_t t = 0;
};

/// (1/(B*k)) sum of squared errors + lambda * sum over regularized tensors of
/// squared elements. Differentiable; gold rows are constants.
ad::Tensor loss(const ad::Tensor& predictions, const ad::Tensor& gold,
                std::span<const ad::Tensor> regularized, double lambda);

/// One Adam update with bias correction over grads filled in by backward().
void adam_step(std::span<ad::Tensor> params, AdamState& state, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::array<std::optional<double>, data::kAspects> dev_pearson;
  std::array<double, data::kAspects> dev_mse{};
  /// Line-delimited JSON record for the training log.
  std::string json() const;
};

struct TrainResult {
  model::ModelParams params;  // snapshot from the best dev epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full loop: dev split, shuffled batches, MSE+L2 loss, Adam, per-epoch dev
/// metrics; returns the snapshot from the best mean-dev-Pearson epoch.
/// Fully reproducible for a fixed seed. Non-finite loss aborts with the
/// offending epoch/batch in the message.
TrainResult train(const model::ModelConfig& model_config, const TrainConfig& train_config,
                  const data::Corpus& corpus, embeddings::EmbeddingTable source_table,
                  embeddings::EmbeddingTable target_table,
                  const EpochCallback& on_epoch = nullptr);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string metrics_json;  // free-form summary, may be empty
};

/// Archive layout: "TQE1 <manifest_bytes>\n", then a JSON manifest (config,
/// vocab, tensor names/shapes/offsets, float64|float32 flag), then raw
/// little-endian IEEE-754 payloads in manifest order.
void save_checkpoint(const model::ModelParams& params, const model::ModelConfig& config,
                     const CheckpointMeta& meta, const std::filesystem::path& path,
                     bool float32 = false);

struct Checkpoint {
  model::ModelParams params;
  model::ModelConfig config;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As above, but fails with a config-mismatch error if the stored model
/// config differs from the expected one.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const model::ModelConfig& expected);

}  // namespace tqe::train
