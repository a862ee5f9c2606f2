#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "tqe/errors.hpp"
#include "tqe/model.hpp"
#include "tqe/rng.hpp"

using namespace tqe;
using ad::Tensor;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.embed_dim = 6;
  c.conv_widths = {2};
  c.conv_channels = 5;
  c.lstm_hidden = 4;
  c.dropout_rate = 0.0;
  return c;
}

std::vector<std::string> side_vocab(bool source) {
  std::vector<std::string> v;
  for (int i = 0; i < 8; ++i)
    v.push_back((source ? "s" : "t") + std::to_string(i));
  return v;
}

model::ModelParams tiny_params(const model::ModelConfig& config, std::uint64_t seed) {
  auto src = embeddings::random_table(side_vocab(true), config.embed_dim, seed);
  auto tgt = embeddings::random_table(side_vocab(false), config.embed_dim, seed + 1);
  return model::init_params(config, std::move(src), std::move(tgt), seed);
}

data::Batch single_batch(std::vector<std::string> src, std::vector<std::string> tgt) {
  data::Batch b;
  b.source_lengths.push_back(src.size());
  b.target_lengths.push_back(tgt.size());
  b.source_tokens.push_back(std::move(src));
  b.target_tokens.push_back(std::move(tgt));
  b.gold.push_back({});
  b.ids.push_back("x");
  return b;
}

Tensor random_matrix(std::size_t r, std::size_t c, DetRng& rng, bool param = false) {
  std::vector<double> data(r * c);
  for (double& v : data) v = rng.uniform(-1.0, 1.0);
  return param ? Tensor::param({r, c}, std::move(data))
               : Tensor::from_data({r, c}, std::move(data));
}

}  // namespace

TEST_CASE("conv_context zero input with zero bias stays zero") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 1);
  const Tensor embeds = Tensor::zeros({3, config.embed_dim});
  const Tensor out = model::conv_context(embeds, 2, params.source.conv_w[0],
                                         params.source.conv_b[0], 3);
  CHECK(out.shape() == std::vector<std::size_t>{3, config.conv_channels});
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("conv_context on a single token uses the padded window") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 2);
  DetRng rng(5);
  const Tensor embeds = random_matrix(1, config.embed_dim, rng);
  const Tensor out = model::conv_context(embeds, 2, params.source.conv_w[0],
                                         params.source.conv_b[0], 1);
  CHECK(out.shape() == std::vector<std::size_t>{1, config.conv_channels});
}

TEST_CASE("conv gradient matches finite differences") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 3);
  DetRng rng(6);
  Tensor embeds = random_matrix(4, config.embed_dim, rng, true);
  std::vector<Tensor> check{embeds, params.source.conv_w[0], params.source.conv_b[0]};
  const double err = ad::gradient_check(
      [&] {
        return ad::sum_squares(model::conv_context(embeds, 2, params.source.conv_w[0],
                                                   params.source.conv_b[0], 4));
      },
      check);
  CHECK(err < 1e-5);
}

TEST_CASE("bilstm outputs stay strictly inside (-1, 1)") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 4);
  DetRng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    Tensor feats = random_matrix(n, config.feature_dim(), rng);
    const Tensor h = model::bilstm_encode(feats, params.source, config, n);
    CHECK(h.shape() == std::vector<std::size_t>{n, 2 * config.lstm_hidden});
    for (double v : h.data()) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("bilstm single step runs both directions once") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 8);
  DetRng rng(9);
  Tensor feats = random_matrix(1, config.feature_dim(), rng);
  const Tensor h = model::bilstm_encode(feats, params.source, config, 1);
  CHECK(h.shape() == std::vector<std::size_t>{1, 2 * config.lstm_hidden});
  // forward and backward halves both non-trivial
  double fwd = 0, bwd = 0;
  for (std::size_t j = 0; j < config.lstm_hidden; ++j) {
    fwd += std::abs(h(0, j));
    bwd += std::abs(h(0, config.lstm_hidden + j));
  }
  CHECK(fwd > 0.0);
  CHECK(bwd > 0.0);
}

TEST_CASE("bilstm gradient matches finite differences") {
  auto config = tiny_config();
  config.lstm_hidden = 2;
  auto params = tiny_params(config, 10);
  DetRng rng(11);
  Tensor feats = random_matrix(3, config.feature_dim(), rng, true);
  std::vector<Tensor> check{feats,
                            params.source.lstm[0].fwd.wx,
                            params.source.lstm[0].fwd.wh,
                            params.source.lstm[0].fwd.b,
                            params.source.lstm[0].bwd.wx,
                            params.source.lstm[0].bwd.wh,
                            params.source.lstm[0].bwd.b};
  const double err = ad::gradient_check(
      [&] { return ad::sum_squares(model::bilstm_encode(feats, params.source, config, 3)); },
      check);
  CHECK(err < 1e-4);
}

TEST_CASE("attention_pool basics") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 12);
  DetRng rng(13);
  const std::size_t two_h = 2 * config.lstm_hidden;

  SUBCASE("single position gets weight 1 and returns that row") {
    Tensor h = random_matrix(1, two_h, rng);
    Tensor ctx = ad::mean_rows(random_matrix(3, two_h, rng));
    const auto pooled = model::attention_pool(h, ctx, params.source.attn, 1);
    CHECK(pooled.alphas.size() == 1);
    CHECK(pooled.alphas(0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < two_h; ++j)
      CHECK(pooled.pooled(j) == doctest::Approx(h(0, j)).epsilon(1e-12));
  }

  SUBCASE("identical rows give uniform weights") {
    std::vector<double> row(two_h);
    for (double& v : row) v = rng.uniform(-1, 1);
    std::vector<double> tiled;
    for (int i = 0; i < 4; ++i) tiled.insert(tiled.end(), row.begin(), row.end());
    Tensor h = Tensor::from_data({4, two_h}, tiled);
    Tensor ctx = ad::mean_rows(random_matrix(2, two_h, rng));
    const auto pooled = model::attention_pool(h, ctx, params.source.attn, 4);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(pooled.alphas(i) == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("empty mask is an error") {
    Tensor h = random_matrix(3, two_h, rng);
    Tensor ctx = ad::mean_rows(random_matrix(2, two_h, rng));
    CHECK_THROWS_AS(model::attention_pool(h, ctx, params.source.attn, 0), NumericError);
  }
}

TEST_CASE("attention simplex and hull over randomized inputs") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 14);
  DetRng rng(15);
  const std::size_t two_h = 2 * config.lstm_hidden;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t total = 1 + rng.below(7);
    const std::size_t valid = 1 + rng.below(total);
    Tensor h = random_matrix(total, two_h, rng);
    Tensor ctx = ad::mean_rows(random_matrix(1 + rng.below(4), two_h, rng));
    const auto pooled = model::attention_pool(h, ctx, params.source.attn, valid);

    double total_w = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      const double a = pooled.alphas(i);
      CHECK(a >= 0.0);
      if (i >= valid) CHECK(a == 0.0);  // PAD positions carry exactly 0
      total_w += a;
    }
    CHECK(std::abs(total_w - 1.0) < 1e-6);

    // pooled vector inside the coordinate-wise hull of the valid rows
    for (std::size_t j = 0; j < two_h; ++j) {
      double lo = 1e99, hi = -1e99;
      for (std::size_t i = 0; i < valid; ++i) {
        lo = std::min(lo, h(i, j));
        hi = std::max(hi, h(i, j));
      }
      CHECK(pooled.pooled(j) >= lo - 1e-12);
      CHECK(pooled.pooled(j) <= hi + 1e-12);
    }
  }
}

TEST_CASE("forward output shape and inference determinism") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 16);
  data::Batch b;
  for (int i = 0; i < 2; ++i) {  // two identical pairs
    b.source_tokens.push_back({"s0", "s1", "s2"});
    b.target_tokens.push_back({"t0", "t1"});
    b.source_lengths.push_back(3);
    b.target_lengths.push_back(2);
    b.gold.push_back({});
    b.ids.push_back("p" + std::to_string(i));
  }
  const Tensor out = model::forward(params, config, b);
  CHECK(out.shape() == std::vector<std::size_t>{2, 4});
  for (std::size_t a = 0; a < 4; ++a) CHECK(out(0, a) == out(1, a));
}

TEST_CASE("PAD insensitivity: a longer batch-mate cannot change another row") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 17);
  auto bare = single_batch({"s0", "s1"}, {"t0", "t1", "t2"});
  const Tensor alone = model::forward(params, config, bare);

  data::Batch padded;
  padded.source_tokens.push_back({"s0", "s1", "<pad>", "<pad>"});
  padded.target_tokens.push_back({"t0", "t1", "t2", "<pad>"});
  padded.source_lengths.push_back(2);
  padded.target_lengths.push_back(3);
  padded.gold.push_back({});
  padded.ids.push_back("a");
  padded.source_tokens.push_back({"s3", "s4", "s5", "s6"});
  padded.target_tokens.push_back({"t3", "t4", "t5", "t6"});
  padded.source_lengths.push_back(4);
  padded.target_lengths.push_back(4);
  padded.gold.push_back({});
  padded.ids.push_back("b");

  const Tensor together = model::forward(params, config, padded);
  for (std::size_t a = 0; a < 4; ++a) CHECK(together(0, a) == alone(0, a));  // bitwise
}

TEST_CASE("full model gradient check on the tiny configuration") {
  auto config = tiny_config();
  auto params = tiny_params(config, 18);
  auto batch = single_batch({"s0", "s1", "s2", "s3", "s4"}, {"t0", "t1", "t2"});

  // Gold sits near the initial predictions so the check loss stays O(1);
  // central differences on a loss of ~1e2 drown gradients below ~1e-8 in
  // float64 cancellation noise.
  const Tensor base = model::forward(params, config, batch);
  const Tensor gold = Tensor::from_data(
      {1, 4}, {base(0, 0) + 0.3, base(0, 1) - 0.2, base(0, 2) + 0.25, base(0, 3) - 0.35});

  // eps widened to 1e-4: deep composites leave ~1e-12 cancellation noise in
  // the numerator at the default step, which the 1e-8 floor turns into ~1e-4.
  auto check = params.trainable();
  const double err = ad::gradient_check(
      [&] {
        const Tensor pred = model::forward(params, config, batch);
        return ad::mul_scalar(ad::sum_squares(ad::sub(pred, gold)), 0.25);
      },
      check, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("predict clamps into rubric ranges and keeps raw values") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 19);
  // Force predictable raw outputs through the output bias.
  for (double& v : params.out_w.data()) v = 0.0;
  params.out_b.data() = {40.2, -1.0, 10.0, -3.0};
  auto batch = single_batch({"s0"}, {"t0"});
  const auto preds = model::predict(params, config, batch);
  REQUIRE(preds.size() == 1);
  CHECK(preds[0].raw.ut == doctest::Approx(40.2));
  CHECK(preds[0].clamped.ut == 35.0);
  CHECK(preds[0].raw.ts == doctest::Approx(-1.0));
  CHECK(preds[0].clamped.ts == 0.0);
  CHECK(preds[0].clamped.iw == doctest::Approx(10.0));  // in range: unchanged
  CHECK(preds[0].clamped.tm == 0.0);
}

TEST_CASE("attention_weights record aligns tokens and weights") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 20);
  data::Example ex;
  ex.source_tokens = {"s0"};
  ex.target_tokens = {"t0", "t1", "t2"};
  ex.id = "e";
  const auto rec = model::attention_weights(params, config, ex);
  REQUIRE(rec.source_tokens.size() == rec.source_weights.size());
  REQUIRE(rec.target_tokens.size() == rec.target_weights.size());
  CHECK(rec.source_weights[0] == doctest::Approx(1.0).epsilon(1e-12));
  double tgt_sum = 0;
  for (double w : rec.target_weights) tgt_sum += w;
  CHECK(tgt_sum == doctest::Approx(1.0).epsilon(1e-6));

  const std::string json = model::attention_record_json(rec);
  CHECK(json.find("\"source\"") != std::string::npos);
  CHECK(json.find("\"scores_raw\"") != std::string::npos);
  CHECK(json.find("\"scores_clamped\"") != std::string::npos);
}

TEST_CASE("inference is a pure function of params and example") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 21);
  auto batch = single_batch({"s0", "s1"}, {"t0"});
  const Tensor a = model::forward(params, config, batch);
  const Tensor b = model::forward(params, config, batch);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a(0, i) == b(0, i));
}

TEST_CASE("multi-width conv and multi-layer lstm configurations run") {
  model::ModelConfig config = tiny_config();
  config.conv_widths = {1, 2, 3};
  config.num_lstm_layers = 2;
  auto params = tiny_params(config, 22);
  auto batch = single_batch({"s0", "s1", "s2"}, {"t0", "t1"});
  const Tensor out = model::forward(params, config, batch);
  CHECK(out.shape() == std::vector<std::size_t>{1, 4});

  std::vector<ad::Tensor> check{params.source.conv_w[1], params.source.lstm[1].fwd.wx};
  const Tensor gold = Tensor::from_data(
      {1, 4}, {out(0, 0) + 0.4, out(0, 1) - 0.3, out(0, 2) + 0.2, out(0, 3) - 0.1});
  const double err = ad::gradient_check(
      [&] {
        return ad::sum_squares(ad::sub(model::forward(params, config, batch), gold));
      },
      check, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("shared attention aliases the parameter tensors") {
  model::ModelConfig config = tiny_config();
  config.share_attention = true;
  auto params = tiny_params(config, 23);
  CHECK(params.source.attn.v.node() == params.target.attn.v.node());
  const auto named = params.named();
  std::size_t attn_count = 0;
  for (const auto& [name, t] : named)
    if (name.find(".attn.") != std::string::npos) ++attn_count;
  CHECK(attn_count == 3);  // listed once, not twice
}

TEST_CASE("parameter count matches the config arithmetic") {
  const auto config = tiny_config();
  auto params = tiny_params(config, 24);
  const std::size_t d = config.embed_dim, m = config.conv_channels, h = config.lstm_hidden;
  const std::size_t da = config.effective_attention_dim();
  const std::size_t conv = (2 * 2 + 1) * d * m + m;
  const std::size_t lstm_dir = 4 * h * config.feature_dim() + 4 * h * h + 4 * h;
  const std::size_t attn = da + 2 * (da * 2 * h);
  const std::size_t per_side = conv + 2 * lstm_dir + attn;
  const std::size_t out = 4 * 4 * h + 4;
  const std::size_t embeds =
      params.source_table.vocab_size() * d + params.target_table.vocab_size() * d;
  CHECK(params.parameter_count() == embeds + 2 * per_side + out);
}
