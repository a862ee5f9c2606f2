#include "tqe/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "tqe/errors.hpp"
#include "tqe/evaluation.hpp"
#include "tqe/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as little-endian IEEE-754");

namespace tqe::train {

using ad::Tensor;

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("train config: learning_rate must be > 0");
  if (!(l2_lambda >= 0)) throw ConfigError("train config: l2_lambda must be >= 0");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("train config: dropout must be in [0,1)");
  if (batch_size == 0) throw ConfigError("train config: batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("train config: epochs must be >= 1");
  if (!(dev_fraction >= 0 && dev_fraction < 1))
    throw ConfigError("train config: dev_fraction must be in [0,1)");
}

Tensor loss(const Tensor& predictions, const Tensor& gold,
            std::span<const Tensor> regularized, double lambda) {
  if (predictions.shape() != gold.shape())
    throw ad::ShapeError("loss: prediction shape " + ad::shape_string(predictions.shape()) +
                         " does not match gold " + ad::shape_string(gold.shape()));
  const Tensor diff = ad::sub(predictions, gold);
  const double scale = 1.0 / static_cast<double>(predictions.size());
  Tensor total = ad::mul_scalar(ad::sum_squares(diff), scale);
  if (lambda > 0.0) {
    for (const Tensor& t : regularized)
      total = ad::add(total, ad::mul_scalar(ad::sum_squares(t), lambda));
  }
  return total;
}

void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& config) {
  if (state.slots.empty()) {
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.slots[i].m.assign(params[i].size(), 0.0);
      state.slots[i].v.assign(params[i].size(), 0.0);
    }
  }
  if (state.slots.size() != params.size())
    throw NumericError("adam_step: state does not match parameter list");
  ++state.t;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (p.grad().size() != p.size())
      throw NumericError("adam_step: missing gradient for trainable parameter " +
                         std::to_string(i));
    auto& m = state.slots[i].m;
    auto& v = state.slots[i].v;
    auto& data = p.data();
    const auto& g = p.grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      data[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
  }
}

std::string EpochRecord::json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  for (std::size_t a = 0; a < data::kAspects; ++a) {
    if (dev_pearson[a])
      j["dev_pearson"][data::kAspectNames[a]] = *dev_pearson[a];
    else
      j["dev_pearson"][data::kAspectNames[a]] = nullptr;
    j["dev_mse"][data::kAspectNames[a]] = dev_mse[a];
  }
  return j.dump();
}

namespace {

Tensor gold_tensor(const data::Batch& batch) {
  std::vector<double> values;
  values.reserve(batch.size() * data::kAspects);
  for (const auto& g : batch.gold)
    for (std::size_t a = 0; a < data::kAspects; ++a) values.push_back(g[a]);
  return Tensor::from_data({batch.size(), data::kAspects}, std::move(values));
}

double mean_defined(const std::array<std::optional<double>, data::kAspects>& xs) {
  double acc = 0.0;
  for (const auto& x : xs) acc += x.value_or(0.0);
  return acc / static_cast<double>(xs.size());
}

}  // namespace

TrainResult train(const model::ModelConfig& model_config, const TrainConfig& train_config,
                  const data::Corpus& corpus, embeddings::EmbeddingTable source_table,
                  embeddings::EmbeddingTable target_table, const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  if (corpus.empty()) throw ConfigError("train: empty corpus");

  model::ModelConfig cfg = model_config;
  cfg.dropout_rate = train_config.dropout;

  // Dev split; dev_fraction 0 evaluates on the training set itself.
  data::Corpus fit_set = corpus;
  data::Corpus dev_set;
  const std::size_t n_dev =
      static_cast<std::size_t>(std::floor(train_config.dev_fraction *
                                          static_cast<double>(corpus.size())));
  if (n_dev > 0) {
    auto [tr, dv] =
        data::split(corpus, corpus.size() - n_dev, derive_seed(train_config.seed, "devsplit"));
    fit_set = std::move(tr);
    dev_set = std::move(dv);
  } else {
    dev_set = corpus;
  }

  model::ModelParams params =
      model::init_params(cfg, std::move(source_table), std::move(target_table),
                         train_config.seed);
  auto trainable = params.trainable();
  const auto regularized =
      params.regularized(train_config.regularize_embeddings, train_config.regularize_biases);

  AdamState adam;
  DetRng dropout_rng(derive_seed(train_config.seed, "dropout"));

  TrainResult result{params.clone(), {}, 0};
  double best_score = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    const auto batches = data::make_batches(
        fit_set, train_config.batch_size,
        derive_seed(train_config.seed, "batch-" + std::to_string(epoch)), true);
    double loss_sum = 0.0;
    std::size_t example_count = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const data::Batch& batch = batches[bi];
      const Tensor preds =
          model::forward(params, cfg, batch, model::Mode::kTrain, &dropout_rng);
      const Tensor batch_loss = loss(preds, gold_tensor(batch), regularized,
                                     train_config.l2_lambda);
      const double lv = batch_loss.item();
      if (!std::isfinite(lv))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(bi + 1));
      loss_sum += lv * static_cast<double>(batch.size());
      example_count += batch.size();
      ad::backward(batch_loss);
      adam_step(trainable, adam, train_config);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(example_count);
    const auto report = eval::evaluate(params, cfg, dev_set);
    for (std::size_t a = 0; a < data::kAspects; ++a) {
      rec.dev_pearson[a] = report.aspects[a].pearson;
      rec.dev_mse[a] = report.aspects[a].mse;
    }
    const double score = mean_defined(rec.dev_pearson);
    if (score > best_score) {
      best_score = score;
      result.params = params.clone();
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    log_debug("epoch " + std::to_string(epoch) + " train_loss " +
              format_double(rec.train_loss));
  }
  return result;
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[] = "TQE1";

nlohmann::json config_json(const model::ModelConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"conv_widths", c.conv_widths},
          {"conv_channels", c.conv_channels},
          {"lstm_hidden", c.lstm_hidden},
          {"attention_dim", c.attention_dim},
          {"num_lstm_layers", c.num_lstm_layers},
          {"dropout_rate", c.dropout_rate},
          {"share_attention", c.share_attention}};
}

model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.conv_widths = j.at("conv_widths").get<std::vector<std::size_t>>();
  c.conv_channels = j.at("conv_channels").get<std::size_t>();
  c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  c.attention_dim = j.at("attention_dim").get<std::size_t>();
  c.num_lstm_layers = j.at("num_lstm_layers").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.share_attention = j.at("share_attention").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const model::ModelParams& params, const model::ModelConfig& config,
                     const CheckpointMeta& meta, const std::filesystem::path& path,
                     bool float32) {
  nlohmann::json manifest;
  manifest["format"] = "tqe-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = float32 ? "float32" : "float64";
  manifest["seed"] = meta.seed;
  manifest["epoch"] = meta.epoch;
  manifest["metrics"] = meta.metrics_json;
  manifest["model_config"] = config_json(config);
  manifest["source_vocab"] = params.source_table.ordered_tokens();
  manifest["target_vocab"] = params.target_table.ordered_tokens();
  manifest["lowercase_source"] = params.source_table.lowercase;
  manifest["lowercase_target"] = params.target_table.lowercase;
  manifest["freeze_embeddings"] = params.freeze_embeddings;
  manifest["share_attention"] = params.share_attention;

  const auto named = params.named();
  const std::size_t elem = float32 ? 4 : 8;
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : named) {
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"count", t.size()}});
    offset += t.size() * elem;
  }
  manifest["tensors"] = tensors;

  const std::string mstr = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write checkpoint: " + path.string());
  out << kMagic << ' ' << mstr.size() << '\n' << mstr;
  for (const auto& [name, t] : named) {
    if (float32) {
      std::vector<float> buf(t.data().begin(), t.data().end());
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.data().size() * sizeof(double)));
    }
  }
  if (!out) throw ParseError("short write on checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string blob = read_file(path);
  const std::string name = path.filename().string();
  const std::size_t nl = blob.find('\n');
  if (nl == std::string::npos || blob.compare(0, 4, kMagic) != 0 || blob.size() < 6)
    throw ParseError(name + ": not a checkpoint file (bad header)");
  std::size_t manifest_size = 0;
  try {
    manifest_size = std::stoull(blob.substr(5, nl - 5));
  } catch (const std::exception&) {
    throw ParseError(name + ": bad manifest size in header");
  }
  if (nl + 1 + manifest_size > blob.size())
    throw ParseError(name + ": truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(nl + 1, manifest_size));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(name + ": bad manifest JSON: " + e.what());
  }

  Checkpoint ck;
  try {
    ck.config = config_from_json(manifest.at("model_config"));
    ck.meta.seed = manifest.at("seed").get<std::uint64_t>();
    ck.meta.epoch = manifest.at("epoch").get<std::size_t>();
    ck.meta.metrics_json = manifest.at("metrics").get<std::string>();

    const bool float32 = manifest.at("dtype").get<std::string>() == "float32";
    const std::size_t elem = float32 ? 4 : 8;
    const char* payload = blob.data() + nl + 1 + manifest_size;
    const std::size_t payload_size = blob.size() - (nl + 1 + manifest_size);

    std::vector<std::pair<std::string, Tensor>> loaded;
    for (const auto& tj : manifest.at("tensors")) {
      const std::string tname = tj.at("name").get<std::string>();
      const auto shape = tj.at("shape").get<std::vector<std::size_t>>();
      const std::size_t offset = tj.at("offset").get<std::size_t>();
      const std::size_t count = tj.at("count").get<std::size_t>();
      std::size_t numel = 1;
      for (std::size_t e : shape) numel *= e;
      if (numel != count)
        throw ParseError(name + ": tensor '" + tname + "' shape does not match count");
      if (offset + count * elem > payload_size)
        throw ParseError(name + ": truncated payload for tensor '" + tname + "'");
      std::vector<double> values(count);
      if (float32) {
        std::vector<float> buf(count);
        std::memcpy(buf.data(), payload + offset, count * sizeof(float));
        std::copy(buf.begin(), buf.end(), values.begin());
      } else {
        std::memcpy(values.data(), payload + offset, count * sizeof(double));
      }
      loaded.emplace_back(tname, Tensor::param(shape, std::move(values)));
    }

    auto find = [&](const std::string& tname) -> Tensor {
      for (auto& [n, t] : loaded)
        if (n == tname) return t;
      throw ParseError(name + ": manifest missing tensor '" + tname + "'");
    };

    ck.params.freeze_embeddings = manifest.at("freeze_embeddings").get<bool>();
    ck.params.share_attention = manifest.at("share_attention").get<bool>();

    const auto src_vocab = manifest.at("source_vocab").get<std::vector<std::string>>();
    const auto tgt_vocab = manifest.at("target_vocab").get<std::vector<std::string>>();
    Tensor src_matrix = find("embed.source");
    Tensor tgt_matrix = find("embed.target");
    ck.params.source_table = embeddings::table_from_rows(
        src_vocab, ck.config.embed_dim, src_matrix.data(),
        manifest.at("lowercase_source").get<bool>());
    ck.params.target_table = embeddings::table_from_rows(
        tgt_vocab, ck.config.embed_dim, tgt_matrix.data(),
        manifest.at("lowercase_target").get<bool>());
    if (ck.params.freeze_embeddings) {
      ck.params.source_table.matrix.set_requires_grad(false);
      ck.params.target_table.matrix.set_requires_grad(false);
    }

    auto load_side = [&](const std::string& prefix, bool with_attention) {
      model::SideParams side;
      for (std::size_t i = 0; i < ck.config.conv_widths.size(); ++i) {
        side.conv_w.push_back(find(prefix + ".conv" + std::to_string(i) + ".w"));
        side.conv_b.push_back(find(prefix + ".conv" + std::to_string(i) + ".b"));
      }
      for (std::size_t l = 0; l < ck.config.num_lstm_layers; ++l) {
        const std::string lp = prefix + ".lstm" + std::to_string(l);
        model::LstmLayerParams layer;
        layer.fwd = {find(lp + ".fwd.wx"), find(lp + ".fwd.wh"), find(lp + ".fwd.b")};
        layer.bwd = {find(lp + ".bwd.wx"), find(lp + ".bwd.wh"), find(lp + ".bwd.b")};
        side.lstm.push_back(std::move(layer));
      }
      if (with_attention)
        side.attn = {find(prefix + ".attn.v"), find(prefix + ".attn.w1"),
                     find(prefix + ".attn.w2")};
      return side;
    };
    ck.params.source = load_side("source", true);
    ck.params.target = load_side("target", !ck.params.share_attention);
    if (ck.params.share_attention) ck.params.target.attn = ck.params.source.attn;
    ck.params.out_w = find("out.w");
    ck.params.out_b = find("out.b");

    // Shape sanity against the stored config.
    const std::size_t h = ck.config.lstm_hidden;
    auto expect = [&](const Tensor& t, std::vector<std::size_t> shape, const std::string& tn) {
      if (t.shape() != shape)
        throw ParseError(name + ": tensor '" + tn + "' has shape " +
                         ad::shape_string(t.shape()) + ", expected " + ad::shape_string(shape));
    };
    expect(ck.params.out_w, {data::kAspects, 4 * h}, "out.w");
    expect(ck.params.out_b, {data::kAspects}, "out.b");
    for (std::size_t i = 0; i < ck.config.conv_widths.size(); ++i) {
      const std::size_t k = ck.config.conv_widths[i];
      expect(ck.params.source.conv_w[i],
             {(2 * k + 1) * ck.config.embed_dim, ck.config.conv_channels},
             "source.conv" + std::to_string(i) + ".w");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(name + ": bad manifest field: " + e.what());
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const model::ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  model::ModelConfig stored = ck.config;
  // Dropout is a training-time knob; it does not participate in the
  // architecture comparison.
  model::ModelConfig a = stored, b = expected;
  a.dropout_rate = b.dropout_rate = 0.0;
  if (!(a == b))
    throw ConfigError(path.filename().string() +
                      ": checkpoint model config does not match the requested one");
  return ck;
}

}  // namespace tqe::train
