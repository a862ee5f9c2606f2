#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tqe/dataset.hpp"
#include "tqe/embeddings.hpp"
#include "tqe/tensor.hpp"

namespace tqe::model {

/// Twin-encoder dimensions. attention_dim == 0 means "use 2*lstm_hidden".
struct ModelConfig {
  std::size_t embed_dim = 200;
  std::vector<std::size_t> conv_widths{2};
  std::size_t conv_channels = 100;
  std::size_t lstm_hidden = 100;
  std::size_t attention_dim = 0;
  std::size_t num_lstm_layers = 1;
  double dropout_rate = 0.5;
  bool share_attention = false;

  static constexpr std::size_t kAspects = data::kAspects;

  std::size_t effective_attention_dim() const {
    return attention_dim ? attention_dim : 2 * lstm_hidden;
  }
  std::size_t feature_dim() const { return conv_channels * conv_widths.size(); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Gate order inside the stacked LSTM tensors: input, forget, candidate, output.
struct LstmDirParams {
  ad::Tensor wx;  // [4h, F]
  ad::Tensor wh;  // [4h, h]
  ad::Tensor b;   // [4h]
};

struct LstmLayerParams {
  LstmDirParams fwd, bwd;
};

struct AttentionParams {
  ad::Tensor v;   // [da]
  ad::Tensor w1;  // [da, 2h]  applied to the cross-sentence context
  ad::Tensor w2;  // [da, 2h]  applied to each own-side position
};

struct SideParams {
  std::vector<ad::Tensor> conv_w;  // per width: [(2k+1)*d, m]
  std::vector<ad::Tensor> conv_b;  // per width: [m]
  std::vector<LstmLayerParams> lstm;
  AttentionParams attn;
};

struct ModelParams {
  embeddings::EmbeddingTable source_table;
  embeddings::EmbeddingTable target_table;
  SideParams source;
  SideParams target;  // target.attn aliases source.attn when share_attention
  ad::Tensor out_w;   // [4, 4h]
  ad::Tensor out_b;   // [4]
  bool freeze_embeddings = false;
  bool share_attention = false;

  /// Every distinct tensor once, in a stable order (checkpoint layout).
  std::vector<std::pair<std::string, ad::Tensor>> named() const;
  std::vector<ad::Tensor> trainable() const;
  std::vector<ad::Tensor> regularized(bool include_embeddings, bool include_biases) const;
  std::size_t parameter_count() const;
  ModelParams clone() const;
};

/// Seeded initialization: uniform +-sqrt(6/(fan_in+fan_out)) weights, zero
/// biases with the forget-gate slice at +1.
ModelParams init_params(const ModelConfig& config, embeddings::EmbeddingTable source_table,
                        embeddings::EmbeddingTable target_table, std::uint64_t seed);

/// relu of the affine map over the (2k+1)-token window centered at each of the
/// first valid_len positions (zero padding at the sequence edges); rows past
/// valid_len come out as zeros.
ad::Tensor conv_context(const ad::Tensor& embeds, std::size_t halfwidth,
                        const ad::Tensor& kernels, const ad::Tensor& bias,
                        std::size_t valid_len);

/// All configured widths, concatenated feature-wise -> [n, channels*#widths].
ad::Tensor conv_features(const ad::Tensor& embeds, const SideParams& side,
                         const ModelConfig& config, std::size_t valid_len);

/// Stacked BiLSTM; row i is forward state_i ++ backward state_i. The backward
/// direction runs over the reversed valid prefix; rows past valid_len are zero.
ad::Tensor bilstm_encode(const ad::Tensor& features, const SideParams& side,
                         const ModelConfig& config, std::size_t valid_len);

struct AttentionPooled {
  ad::Tensor pooled;  // [2h]
  ad::Tensor alphas;  // [n]; simplex over the valid prefix, exact 0 past it
};

/// score_i = v . tanh(w1 context + w2 h_i), alphas = softmax over the valid
/// prefix, pooled = sum_i alpha_i h_i.
AttentionPooled attention_pool(const ad::Tensor& h_self, const ad::Tensor& context,
                               const AttentionParams& attn, std::size_t valid_len);

enum class Mode { kInfer, kTrain };

/// Full pipeline over a batch -> raw scores [B, 4] in order UT, TS, IW, TM.
/// Train mode applies dropout to the conv features and requires a dropout rng.
ad::Tensor forward(const ModelParams& params, const ModelConfig& config,
                   const data::Batch& batch, Mode mode = Mode::kInfer,
                   DetRng* dropout_rng = nullptr);

struct Prediction {
  data::ScoreVector raw;
  data::ScoreVector clamped;  // per-aspect clamp into [0, max_aspect]
};

std::vector<Prediction> predict(const ModelParams& params, const ModelConfig& config,
                                const data::Batch& batch);

struct AttentionRecord {
  std::vector<std::string> source_tokens;
  std::vector<double> source_weights;
  std::vector<std::string> target_tokens;
  std::vector<double> target_weights;
  data::ScoreVector scores_raw;
  data::ScoreVector scores_clamped;
};

AttentionRecord attention_weights(const ModelParams& params, const ModelConfig& config,
                                  const data::Example& example);

/// {source: [{token, weight}...], target: [...], scores_raw, scores_clamped}
std::string attention_record_json(const AttentionRecord& record);

}  // namespace tqe::model
