#include "tqe/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "json.hpp"
#include "tqe/errors.hpp"
#include "tqe/util.hpp"

namespace tqe::model {

using ad::Tensor;

void ModelConfig::validate() const {
  if (embed_dim == 0) throw ConfigError("model config: embed_dim must be positive");
  if (conv_widths.empty()) throw ConfigError("model config: conv_widths must be non-empty");
  for (std::size_t k : conv_widths)
    if (k == 0) throw ConfigError("model config: conv width must be positive");
  if (conv_channels == 0) throw ConfigError("model config: conv_channels must be positive");
  if (lstm_hidden == 0) throw ConfigError("model config: lstm_hidden must be positive");
  if (num_lstm_layers == 0) throw ConfigError("model config: num_lstm_layers must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("model config: dropout_rate must be in [0,1)");
}

// ---- parameter plumbing ----

namespace {

void collect_side(const std::string& prefix, const SideParams& side, bool include_attention,
                  std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t i = 0; i < side.conv_w.size(); ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".w", side.conv_w[i]);
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".b", side.conv_b[i]);
  }
  for (std::size_t l = 0; l < side.lstm.size(); ++l) {
    const std::string lp = prefix + ".lstm" + std::to_string(l);
    out.emplace_back(lp + ".fwd.wx", side.lstm[l].fwd.wx);
    out.emplace_back(lp + ".fwd.wh", side.lstm[l].fwd.wh);
    out.emplace_back(lp + ".fwd.b", side.lstm[l].fwd.b);
    out.emplace_back(lp + ".bwd.wx", side.lstm[l].bwd.wx);
    out.emplace_back(lp + ".bwd.wh", side.lstm[l].bwd.wh);
    out.emplace_back(lp + ".bwd.b", side.lstm[l].bwd.b);
  }
  if (include_attention) {
    out.emplace_back(prefix + ".attn.v", side.attn.v);
    out.emplace_back(prefix + ".attn.w1", side.attn.w1);
    out.emplace_back(prefix + ".attn.w2", side.attn.w2);
  }
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.source", source_table.matrix);
  out.emplace_back("embed.target", target_table.matrix);
  collect_side("source", source, true, out);
  collect_side("target", target, !share_attention, out);
  out.emplace_back("out.w", out_w);
  out.emplace_back("out.b", out_b);
  return out;
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) {
    if (freeze_embeddings && name.rfind("embed.", 0) == 0) continue;
    out.push_back(t);
  }
  return out;
}

std::vector<Tensor> ModelParams::regularized(bool include_embeddings,
                                             bool include_biases) const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) {
    const bool is_embedding = name.rfind("embed.", 0) == 0;
    const bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (is_embedding && !include_embeddings) continue;
    if (is_bias && !include_biases) continue;
    out.push_back(t);
  }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named()) n += t.size();
  return n;
}

namespace {

embeddings::EmbeddingTable clone_table(const embeddings::EmbeddingTable& table) {
  embeddings::EmbeddingTable out = table;
  out.matrix = table.matrix.clone();
  return out;
}

SideParams clone_side(const SideParams& side) {
  SideParams out;
  for (const auto& t : side.conv_w) out.conv_w.push_back(t.clone());
  for (const auto& t : side.conv_b) out.conv_b.push_back(t.clone());
  for (const auto& l : side.lstm)
    out.lstm.push_back({{l.fwd.wx.clone(), l.fwd.wh.clone(), l.fwd.b.clone()},
                        {l.bwd.wx.clone(), l.bwd.wh.clone(), l.bwd.b.clone()}});
  out.attn = {side.attn.v.clone(), side.attn.w1.clone(), side.attn.w2.clone()};
  return out;
}

}  // namespace

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.source_table = clone_table(source_table);
  out.target_table = clone_table(target_table);
  out.source = clone_side(source);
  out.target = clone_side(target);
  if (share_attention) out.target.attn = out.source.attn;
  out.out_w = out_w.clone();
  out.out_b = out_b.clone();
  out.freeze_embeddings = freeze_embeddings;
  out.share_attention = share_attention;
  return out;
}

namespace {

Tensor xavier(std::vector<std::size_t> shape, DetRng& rng) {
  std::size_t fan_sum = 0;
  for (std::size_t e : shape) fan_sum += e;
  if (shape.size() == 1) fan_sum += 1;
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_sum));
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-limit, limit);
  return Tensor::param(std::move(shape), std::move(data));
}

Tensor zero_param(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor::param(std::move(shape), std::vector<double>(n, 0.0));
}

LstmDirParams init_lstm_dir(std::size_t input_dim, std::size_t hidden, DetRng& rng) {
  LstmDirParams p;
  p.wx = xavier({4 * hidden, input_dim}, rng);
  p.wh = xavier({4 * hidden, hidden}, rng);
  p.b = zero_param({4 * hidden});
  // Forget-gate bias starts at +1 (gate order i,f,g,o).
  for (std::size_t i = hidden; i < 2 * hidden; ++i) p.b.data()[i] = 1.0;
  return p;
}

SideParams init_side(const ModelConfig& config, DetRng& rng) {
  SideParams side;
  const std::size_t d = config.embed_dim, m = config.conv_channels, h = config.lstm_hidden;
  for (std::size_t k : config.conv_widths) {
    side.conv_w.push_back(xavier({(2 * k + 1) * d, m}, rng));
    side.conv_b.push_back(zero_param({m}));
  }
  std::size_t input_dim = config.feature_dim();
  for (std::size_t l = 0; l < config.num_lstm_layers; ++l) {
    side.lstm.push_back({init_lstm_dir(input_dim, h, rng), init_lstm_dir(input_dim, h, rng)});
    input_dim = 2 * h;
  }
  const std::size_t da = config.effective_attention_dim();
  side.attn.v = xavier({da}, rng);
  side.attn.w1 = xavier({da, 2 * h}, rng);
  side.attn.w2 = xavier({da, 2 * h}, rng);
  return side;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, embeddings::EmbeddingTable source_table,
                        embeddings::EmbeddingTable target_table, std::uint64_t seed) {
  config.validate();
  if (source_table.dim != config.embed_dim || target_table.dim != config.embed_dim)
    throw ConfigError("init_params: embedding dims (" + std::to_string(source_table.dim) +
                      "/" + std::to_string(target_table.dim) + ") do not match embed_dim " +
                      std::to_string(config.embed_dim));
  DetRng rng(derive_seed(seed, "init"));
  ModelParams params;
  params.source_table = std::move(source_table);
  params.target_table = std::move(target_table);
  params.source = init_side(config, rng);
  params.target = init_side(config, rng);
  params.share_attention = config.share_attention;
  if (config.share_attention) params.target.attn = params.source.attn;
  params.out_w = xavier({ModelConfig::kAspects, 4 * config.lstm_hidden}, rng);
  params.out_b = zero_param({ModelConfig::kAspects});
  log_info("model parameters: " + std::to_string(params.parameter_count()));
  return params;
}

// ---- forward pieces ----

ad::Tensor conv_context(const Tensor& embeds, std::size_t halfwidth, const Tensor& kernels,
                        const Tensor& bias, std::size_t valid_len) {
  const std::size_t n = embeds.rows();
  if (valid_len == 0 || valid_len > n)
    throw ad::ShapeError("conv_context: valid_len out of range");
  const Tensor prefix = valid_len == n ? embeds : ad::slice_rows(embeds, 0, valid_len);
  const Tensor windows = ad::window_concat(prefix, halfwidth);
  const Tensor affine = ad::add_rowvec(ad::matmul(windows, kernels), bias);
  return ad::pad_rows(ad::relu(affine), n);
}

Tensor conv_features(const Tensor& embeds, const SideParams& side, const ModelConfig& config,
                     std::size_t valid_len) {
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < config.conv_widths.size(); ++i)
    parts.push_back(conv_context(embeds, config.conv_widths[i], side.conv_w[i],
                                 side.conv_b[i], valid_len));
  return parts.size() == 1 ? parts[0] : ad::concat(parts, 1);
}

namespace {

struct LstmStep {
  Tensor h, c;
};

LstmStep lstm_step(const LstmDirParams& p, const Tensor& x, const LstmStep& prev,
                   std::size_t hidden) {
  Tensor gates = ad::add(ad::add(ad::matvec(p.wx, x), ad::matvec(p.wh, prev.h)), p.b);
  const Tensor i = ad::sigmoid(ad::slice(gates, 0, hidden));
  const Tensor f = ad::sigmoid(ad::slice(gates, hidden, hidden));
  const Tensor g = ad::tanh(ad::slice(gates, 2 * hidden, hidden));
  const Tensor o = ad::sigmoid(ad::slice(gates, 3 * hidden, hidden));
  const Tensor c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  const Tensor h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

std::vector<Tensor> lstm_run(const LstmDirParams& p, const Tensor& input, std::size_t hidden,
                             bool reverse) {
  const std::size_t steps = input.rows();
  std::vector<Tensor> states(steps);
  LstmStep prev{Tensor::zeros({hidden}), Tensor::zeros({hidden})};
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    prev = lstm_step(p, ad::row(input, t), prev, hidden);
    states[t] = prev.h;
  }
  return states;
}

}  // namespace

Tensor bilstm_encode(const Tensor& features, const SideParams& side, const ModelConfig& config,
                     std::size_t valid_len) {
  const std::size_t n = features.rows();
  if (valid_len == 0 || valid_len > n)
    throw ad::ShapeError("bilstm_encode: valid_len out of range");
  Tensor layer_in = valid_len == n ? features : ad::slice_rows(features, 0, valid_len);
  const std::size_t h = config.lstm_hidden;
  for (const LstmLayerParams& layer : side.lstm) {
    const auto fwd = lstm_run(layer.fwd, layer_in, h, false);
    const auto bwd = lstm_run(layer.bwd, layer_in, h, true);
    std::vector<Tensor> rows(valid_len);
    for (std::size_t t = 0; t < valid_len; ++t) {
      const std::array<Tensor, 2> pair{fwd[t], bwd[t]};
      rows[t] = ad::concat(pair, 0);
    }
    layer_in = ad::stack_rows(rows);
  }
  return ad::pad_rows(layer_in, n);
}

AttentionPooled attention_pool(const Tensor& h_self, const Tensor& context,
                               const AttentionParams& attn, std::size_t valid_len) {
  const std::size_t n = h_self.rows();
  if (valid_len == 0)
    throw NumericError("attention_pool: all positions masked");
  if (valid_len > n) throw ad::ShapeError("attention_pool: valid_len out of range");
  const Tensor prefix = valid_len == n ? h_self : ad::slice_rows(h_self, 0, valid_len);
  // scores_i = v . tanh(w1 context + w2 h_i)
  const Tensor ctx_proj = ad::matvec(attn.w1, context);
  const Tensor pos_proj = ad::matmul(prefix, ad::transpose(attn.w2));
  const Tensor scored = ad::tanh(ad::add_rowvec(pos_proj, ctx_proj));
  const Tensor scores = ad::matvec(scored, attn.v);
  const Tensor alphas_prefix = ad::softmax(scores);
  const Tensor pooled = ad::matvec(ad::transpose(prefix), alphas_prefix);
  Tensor alphas = alphas_prefix;
  if (valid_len < n) {
    const std::array<Tensor, 2> parts{alphas_prefix, Tensor::zeros({n - valid_len})};
    alphas = ad::concat(parts, 0);
  }
  return {pooled, alphas};
}

// ---- full pipeline ----

namespace {

struct PairOutput {
  Tensor scores;  // [4]
  Tensor source_alphas;
  Tensor target_alphas;
};

PairOutput encode_pair(const ModelParams& params, const ModelConfig& config,
                       std::span<const std::string> source_tokens, std::size_t source_len,
                       std::span<const std::string> target_tokens, std::size_t target_len,
                       Mode mode, DetRng* dropout_rng) {
  if (source_len == 0 || target_len == 0)
    throw NumericError("encode_pair: empty token sequence");
  const bool train = mode == Mode::kTrain;
  if (train && config.dropout_rate > 0.0 && dropout_rng == nullptr)
    throw ConfigError("forward: train mode with dropout needs a dropout rng");

  auto encode_side = [&](const embeddings::EmbeddingTable& table, const SideParams& side,
                         std::span<const std::string> tokens, std::size_t len) {
    const Tensor embeds = embeddings::lookup(table, tokens.subspan(0, len));
    Tensor feats = conv_features(embeds, side, config, len);
    if (train && config.dropout_rate > 0.0)
      feats = ad::dropout(feats, config.dropout_rate, *dropout_rng);
    return bilstm_encode(feats, side, config, len);
  };

  const Tensor h_src = encode_side(params.source_table, params.source, source_tokens, source_len);
  const Tensor h_tgt = encode_side(params.target_table, params.target, target_tokens, target_len);

  // Each side is pooled with the other side's mean representation as context.
  const auto src_pool =
      attention_pool(h_src, ad::mean_rows(h_tgt), params.source.attn, source_len);
  const auto tgt_pool =
      attention_pool(h_tgt, ad::mean_rows(h_src), params.target.attn, target_len);

  const std::array<Tensor, 2> sentence_vecs{src_pool.pooled, tgt_pool.pooled};
  const Tensor joint = ad::concat(sentence_vecs, 0);
  const Tensor scores = ad::add(ad::matvec(params.out_w, joint), params.out_b);
  return {scores, src_pool.alphas, tgt_pool.alphas};
}

}  // namespace

Tensor forward(const ModelParams& params, const ModelConfig& config, const data::Batch& batch,
               Mode mode, DetRng* dropout_rng) {
  if (batch.size() == 0) throw ConfigError("forward: empty batch");
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto out = encode_pair(params, config, batch.source_tokens[b], batch.source_lengths[b],
                           batch.target_tokens[b], batch.target_lengths[b], mode, dropout_rng);
    rows.push_back(out.scores);
  }
  return ad::stack_rows(rows);
}

std::vector<Prediction> predict(const ModelParams& params, const ModelConfig& config,
                                const data::Batch& batch) {
  const Tensor raw = forward(params, config, batch, Mode::kInfer);
  std::vector<Prediction> out(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t a = 0; a < data::kAspects; ++a) {
      const double v = raw(b, a);
      out[b].raw[a] = v;
      out[b].clamped[a] = std::clamp(v, 0.0, data::kAspectMax[a]);
    }
  }
  return out;
}

AttentionRecord attention_weights(const ModelParams& params, const ModelConfig& config,
                                  const data::Example& example) {
  auto out = encode_pair(params, config, example.source_tokens, example.source_tokens.size(),
                         example.target_tokens, example.target_tokens.size(), Mode::kInfer,
                         nullptr);
  AttentionRecord rec;
  rec.source_tokens = example.source_tokens;
  rec.target_tokens = example.target_tokens;
  rec.source_weights.assign(out.source_alphas.data().begin(), out.source_alphas.data().end());
  rec.target_weights.assign(out.target_alphas.data().begin(), out.target_alphas.data().end());
  for (std::size_t a = 0; a < data::kAspects; ++a) {
    const double v = out.scores(a);
    rec.scores_raw[a] = v;
    rec.scores_clamped[a] = std::clamp(v, 0.0, data::kAspectMax[a]);
  }
  return rec;
}

std::string attention_record_json(const AttentionRecord& record) {
  nlohmann::json j;
  auto side = [](const std::vector<std::string>& tokens, const std::vector<double>& weights) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < tokens.size(); ++i)
      arr.push_back({{"token", tokens[i]}, {"weight", weights[i]}});
    return arr;
  };
  j["source"] = side(record.source_tokens, record.source_weights);
  j["target"] = side(record.target_tokens, record.target_weights);
  j["scores_raw"] = {{"ut", record.scores_raw.ut},
                     {"ts", record.scores_raw.ts},
                     {"iw", record.scores_raw.iw},
                     {"tm", record.scores_raw.tm}};
  j["scores_clamped"] = {{"ut", record.scores_clamped.ut},
                         {"ts", record.scores_clamped.ts},
                         {"iw", record.scores_clamped.iw},
                         {"tm", record.scores_clamped.tm}};
  return j.dump(2);
}

}  // namespace tqe::model
