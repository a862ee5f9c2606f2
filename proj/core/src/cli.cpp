#include "tqe/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "tqe/analysis.hpp"
#include "tqe/dataset.hpp"
#include "tqe/embeddings.hpp"
#include "tqe/errors.hpp"
#include "tqe/evaluation.hpp"
#include "tqe/model.hpp"
#include "tqe/training.hpp"
#include "tqe/util.hpp"

namespace tqe::cli {

namespace {

namespace fs = std::filesystem;

struct RunConfig {
  // files and directories
  std::string config_path;
  std::string corpus;
  std::string src_embeddings;
  std::string tgt_embeddings;
  std::string checkpoint;
  std::string out = ".";
  std::string input;       // predict: 2-column TSV
  std::string ratings;     // agreement: CSV
  std::string errors;      // analyze-errors: CSV
  std::string source_text;  // attention
  std::string target_text;  // attention

  // model shape
  std::size_t embed_dim = 200;
  std::vector<std::size_t> conv_widths{2};
  std::size_t conv_channels = 100;
  std::size_t hidden = 100;
  std::size_t attention_dim = 0;
  std::size_t lstm_layers = 1;
  bool share_attention = false;

  // training
  double lr = 1e-3;
  double lambda = 1e-3;
  double dropout = 0.5;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 42;
  double dev_fraction = 0.1;
  std::size_t n_train = 0;  // 0 = use the whole corpus for training
  bool freeze_embeddings = false;
  bool regularize_embeddings = false;
  bool regularize_biases = false;
  bool lowercase_source = false;
  bool float32 = false;

  // evaluation / analysis
  bool clamped_metrics = false;
  std::string agreement_metric = "interval";
  std::size_t components = 3;
  bool standardize = false;

  // gen-synthetic
  std::size_t n = 32;

  model::ModelConfig model_config() const {
    model::ModelConfig c;
    c.embed_dim = embed_dim;
    c.conv_widths = conv_widths;
    c.conv_channels = conv_channels;
    c.lstm_hidden = hidden;
    c.attention_dim = attention_dim;
    c.num_lstm_layers = lstm_layers;
    c.dropout_rate = dropout;
    c.share_attention = share_attention;
    return c;
  }

  train::TrainConfig train_config() const {
    train::TrainConfig c;
    c.learning_rate = lr;
    c.l2_lambda = lambda;
    c.dropout = dropout;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.seed = seed;
    c.dev_fraction = dev_fraction;
    c.regularize_embeddings = regularize_embeddings;
    c.regularize_biases = regularize_biases;
    return c;
  }

  nlohmann::json json() const;
};

nlohmann::json RunConfig::json() const {
  return {{"corpus", corpus},
          {"src_embeddings", src_embeddings},
          {"tgt_embeddings", tgt_embeddings},
          {"checkpoint", checkpoint},
          {"out", out},
          {"input", input},
          {"ratings", ratings},
          {"errors", errors},
          {"source", source_text},
          {"target", target_text},
          {"embed_dim", embed_dim},
          {"conv_widths", conv_widths},
          {"conv_channels", conv_channels},
          {"hidden", hidden},
          {"attention_dim", attention_dim},
          {"lstm_layers", lstm_layers},
          {"share_attention", share_attention},
          {"lr", lr},
          {"lambda", lambda},
          {"dropout", dropout},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"dev_fraction", dev_fraction},
          {"n_train", n_train},
          {"freeze_embeddings", freeze_embeddings},
          {"regularize_embeddings", regularize_embeddings},
          {"regularize_biases", regularize_biases},
          {"lowercase_source", lowercase_source},
          {"float32", float32},
          {"clamped_metrics", clamped_metrics},
          {"agreement_metric", agreement_metric},
          {"components", components},
          {"standardize", standardize},
          {"n", n}};
}

// ---- config file: flat key=value lines, '#' comments, flags override ----

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::size_t> parse_width_list(const std::string& v, const std::string& origin) {
  std::vector<std::size_t> widths;
  for (const auto& part : split_on(v, ',')) {
    const std::string p = trim(part);
    try {
      widths.push_back(std::stoull(p));
    } catch (const std::exception&) {
      throw ConfigError(origin + ": bad conv width '" + p + "'");
    }
  }
  if (widths.empty()) throw ConfigError(origin + ": conv_widths must be non-empty");
  return widths;
}

template <class T>
T parse_number(const std::string& v, const std::string& key) {
  try {
    if constexpr (std::is_floating_point_v<T>)
      return static_cast<T>(std::stod(v));
    else
      return static_cast<T>(std::stoull(v));
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.filename().string() + ":" + std::to_string(line_no) +
                        ": expected key=value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));

    if (key == "corpus") cfg.corpus = value;
    else if (key == "src_embeddings") cfg.src_embeddings = value;
    else if (key == "tgt_embeddings") cfg.tgt_embeddings = value;
    else if (key == "checkpoint") cfg.checkpoint = value;
    else if (key == "out") cfg.out = value;
    else if (key == "input") cfg.input = value;
    else if (key == "ratings") cfg.ratings = value;
    else if (key == "errors") cfg.errors = value;
    else if (key == "source") cfg.source_text = value;
    else if (key == "target") cfg.target_text = value;
    else if (key == "embed_dim") cfg.embed_dim = parse_number<std::size_t>(value, key);
    else if (key == "conv_widths") cfg.conv_widths = parse_width_list(value, "config");
    else if (key == "conv_channels") cfg.conv_channels = parse_number<std::size_t>(value, key);
    else if (key == "hidden") cfg.hidden = parse_number<std::size_t>(value, key);
    else if (key == "attention_dim") cfg.attention_dim = parse_number<std::size_t>(value, key);
    else if (key == "lstm_layers") cfg.lstm_layers = parse_number<std::size_t>(value, key);
    else if (key == "share_attention") cfg.share_attention = parse_bool(value, key);
    else if (key == "lr") cfg.lr = parse_number<double>(value, key);
    else if (key == "lambda") cfg.lambda = parse_number<double>(value, key);
    else if (key == "dropout") cfg.dropout = parse_number<double>(value, key);
    else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(value, key);
    else if (key == "epochs") cfg.epochs = parse_number<std::size_t>(value, key);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, key);
    else if (key == "dev_fraction") cfg.dev_fraction = parse_number<double>(value, key);
    else if (key == "n_train") cfg.n_train = parse_number<std::size_t>(value, key);
    else if (key == "freeze_embeddings") cfg.freeze_embeddings = parse_bool(value, key);
    else if (key == "regularize_embeddings")
      cfg.regularize_embeddings = parse_bool(value, key);
    else if (key == "regularize_biases") cfg.regularize_biases = parse_bool(value, key);
    else if (key == "lowercase_source") cfg.lowercase_source = parse_bool(value, key);
    else if (key == "float32") cfg.float32 = parse_bool(value, key);
    else if (key == "clamped_metrics") cfg.clamped_metrics = parse_bool(value, key);
    else if (key == "agreement_metric") cfg.agreement_metric = value;
    else if (key == "components") cfg.components = parse_number<std::size_t>(value, key);
    else if (key == "standardize") cfg.standardize = parse_bool(value, key);
    else if (key == "n") cfg.n = parse_number<std::size_t>(value, key);
    else
      throw ConfigError(path.filename().string() + ":" + std::to_string(line_no) +
                        ": unknown config key '" + key + "'");
  }
}

// ---- shared helpers ----

fs::path prepare_out_dir(const RunConfig& cfg) {
  fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory: " + out.string());
  return out;
}

void dump_resolved_config(const RunConfig& cfg, const std::string& command,
                          const fs::path& out_dir) {
  nlohmann::json j = cfg.json();
  j["command"] = command;
  std::ofstream f(out_dir / "resolved_config.json", std::ios::binary | std::ios::trunc);
  f << j.dump(2) << "\n";
  log_info("resolved config: " + j.dump());
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError("cannot write file: " + path.string());
  f << content;
}

std::vector<std::string> corpus_side_tokens(const data::Corpus& corpus, bool source) {
  std::vector<std::string> tokens;
  for (const auto& ex : corpus.examples) {
    const auto& list = source ? ex.source_tokens : ex.target_tokens;
    tokens.insert(tokens.end(), list.begin(), list.end());
  }
  return tokens;
}

embeddings::EmbeddingTable load_side_table(const std::string& path, const data::Corpus& corpus,
                                           bool source, const RunConfig& cfg) {
  if (!path.empty()) {
    auto table = embeddings::load_embeddings(path, cfg.embed_dim, cfg.seed,
                                             source && cfg.lowercase_source);
    if (table.duplicate_count > 0)
      log_info("embeddings " + path + ": " + std::to_string(table.duplicate_count) +
               " duplicate token(s) ignored");
    return table;
  }
  // No pre-trained file: seeded random table over the corpus vocabulary.
  const auto tokens = corpus_side_tokens(corpus, source);
  return embeddings::random_table(tokens, cfg.embed_dim,
                                  derive_seed(cfg.seed, source ? "src-embed" : "tgt-embed"),
                                  source && cfg.lowercase_source);
}

// ---- subcommands ----

int cmd_gen_synthetic(const RunConfig& cfg) {
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "gen-synthetic", out_dir);
  const data::Corpus corpus = data::gen_synthetic(cfg.n, cfg.seed);
  std::ofstream f(out_dir / "synthetic.tsv", std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError("cannot write synthetic corpus");
  data::serialize_tsv(corpus, f);
  std::cout << (out_dir / "synthetic.tsv").string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("train: --corpus is required");
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "train", out_dir);

  data::Corpus corpus = data::parse_tsv(cfg.corpus);
  if (cfg.n_train > 0) {
    auto [train_part, test_part] =
        data::split(corpus, cfg.n_train, derive_seed(cfg.seed, "split"));
    std::ofstream tf(out_dir / "test_split.tsv", std::ios::binary | std::ios::trunc);
    data::serialize_tsv(test_part, tf);
    log_info("held out " + std::to_string(test_part.size()) + " pairs to test_split.tsv");
    corpus = std::move(train_part);
  }

  auto src_table = load_side_table(cfg.src_embeddings, corpus, true, cfg);
  auto tgt_table = load_side_table(cfg.tgt_embeddings, corpus, false, cfg);

  model::ModelConfig mc = cfg.model_config();
  train::TrainConfig tc = cfg.train_config();

  std::ofstream log_file(out_dir / "training_log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log_file) throw ParseError("cannot write training log");

  auto result = train::train(mc, tc, corpus, std::move(src_table), std::move(tgt_table),
                             [&](const train::EpochRecord& rec) {
                               log_file << rec.json() << "\n";
                               log_file.flush();
                               log_info("epoch " + std::to_string(rec.epoch) + " loss " +
                                        format_double(rec.train_loss));
                             });
  if (cfg.freeze_embeddings) result.params.freeze_embeddings = true;

  const fs::path ckpt_path =
      cfg.checkpoint.empty() ? out_dir / "checkpoint.tqe" : fs::path(cfg.checkpoint);
  train::CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.epoch = result.best_epoch;
  meta.metrics_json = result.history.empty()
                          ? std::string()
                          : result.history[result.best_epoch - 1].json();
  train::save_checkpoint(result.params, mc, meta, ckpt_path, cfg.float32);
  std::cout << "best epoch " << result.best_epoch << ", checkpoint " << ckpt_path.string()
            << "\n";
  return 0;
}

train::Checkpoint load_for_inference(const RunConfig& cfg, bool model_flags_given) {
  if (cfg.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (model_flags_given) return train::load_checkpoint(cfg.checkpoint, cfg.model_config());
  return train::load_checkpoint(cfg.checkpoint);
}

int cmd_evaluate(const RunConfig& cfg, bool model_flags_given) {
  if (cfg.corpus.empty()) throw ConfigError("evaluate: --corpus is required");
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "evaluate", out_dir);
  const auto ck = load_for_inference(cfg, model_flags_given);
  const data::Corpus corpus = data::parse_tsv(cfg.corpus);
  const auto report = eval::evaluate(ck.params, ck.config, corpus, cfg.clamped_metrics);
  std::cout << report.table();
  write_file(out_dir / "eval_report.json", report.json() + "\n");
  return 0;
}

int cmd_predict(const RunConfig& cfg, bool model_flags_given) {
  if (cfg.input.empty()) throw ConfigError("predict: --input is required");
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "predict", out_dir);
  const auto ck = load_for_inference(cfg, model_flags_given);

  std::ifstream in(cfg.input, std::ios::binary);
  if (!in) throw ParseError("cannot open input file: " + cfg.input);
  data::Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  const std::string name = fs::path(cfg.input).filename().string();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 2)
      throw ParseError(name + ":" + std::to_string(line_no) +
                       ": expected 2 tab-separated fields, got " +
                       std::to_string(fields.size()));
    data::Example ex;
    ex.source_tokens = split_ws(fields[0]);
    ex.target_tokens = split_ws(fields[1]);
    if (ex.source_tokens.empty() || ex.target_tokens.empty())
      throw ParseError(name + ":" + std::to_string(line_no) + ": empty text field");
    ex.id = "p-" + std::to_string(line_no);
    corpus.examples.push_back(std::move(ex));
  }
  if (corpus.empty()) throw ParseError(name + ": no input pairs");

  std::ofstream outf(out_dir / "predictions.tsv", std::ios::binary | std::ios::trunc);
  for (const auto& batch : data::make_batches(corpus, 64, 0, false)) {
    const auto preds = model::predict(ck.params, ck.config, batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t t = 0; t < batch.source_lengths[b]; ++t) {
        if (t) outf << ' ';
        outf << batch.source_tokens[b][t];
      }
      outf << '\t';
      for (std::size_t t = 0; t < batch.target_lengths[b]; ++t) {
        if (t) outf << ' ';
        outf << batch.target_tokens[b][t];
      }
      for (std::size_t a = 0; a < data::kAspects; ++a)
        outf << '\t' << format_double(preds[b].clamped[a]);
      outf << '\n';
    }
  }
  std::cout << (out_dir / "predictions.tsv").string() << "\n";
  return 0;
}

int cmd_attention(const RunConfig& cfg, bool model_flags_given) {
  if (cfg.source_text.empty() || cfg.target_text.empty())
    throw ConfigError("attention: --source and --target are required");
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "attention", out_dir);
  const auto ck = load_for_inference(cfg, model_flags_given);
  data::Example ex;
  ex.source_tokens = split_ws(cfg.source_text);
  ex.target_tokens = split_ws(cfg.target_text);
  if (ex.source_tokens.empty() || ex.target_tokens.empty())
    throw ConfigError("attention: empty token sequence");
  const auto record = model::attention_weights(ck.params, ck.config, ex);
  const std::string json = model::attention_record_json(record);
  std::cout << json << "\n";
  write_file(out_dir / "attention.json", json + "\n");
  return 0;
}

int cmd_agreement(const RunConfig& cfg) {
  if (cfg.ratings.empty()) throw ConfigError("agreement: --ratings is required");
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "agreement", out_dir);

  analysis::AgreementMetric metric;
  if (cfg.agreement_metric == "interval") metric = analysis::AgreementMetric::kInterval;
  else if (cfg.agreement_metric == "nominal") metric = analysis::AgreementMetric::kNominal;
  else if (cfg.agreement_metric == "ordinal") metric = analysis::AgreementMetric::kOrdinal;
  else throw ConfigError("agreement: metric must be interval, nominal or ordinal");

  // Long CSV: unit,annotator,ut,ts,iw,tm with empty cells for missing ratings.
  std::ifstream in(cfg.ratings, std::ios::binary);
  if (!in) throw ParseError("cannot open ratings file: " + cfg.ratings);
  const std::string name = fs::path(cfg.ratings).filename().string();
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::map<std::string, std::array<std::optional<double>, 4>>> cells;
  std::set<std::string> annotators;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "unit,annotator,ut,ts,iw,tm")
        throw ParseError(name + ":1: bad header, expected 'unit,annotator,ut,ts,iw,tm'");
      continue;
    }
    const auto fields = split_on(line, ',');
    if (fields.size() != 6)
      throw ParseError(name + ":" + std::to_string(line_no) + ": expected 6 fields, got " +
                       std::to_string(fields.size()));
    annotators.insert(fields[1]);
    auto& cell = cells[fields[0]][fields[1]];
    for (std::size_t a = 0; a < 4; ++a) {
      const std::string& f = fields[2 + a];
      if (f.empty()) continue;
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (end != f.c_str() + f.size())
        throw ParseError(name + ":" + std::to_string(line_no) + ": bad rating '" + f + "'");
      cell[a] = v;
    }
  }
  if (cells.empty()) throw ParseError(name + ": no data rows");
  if (annotators.size() < 2)
    throw NumericError("agreement: need at least 2 annotators, got " +
                       std::to_string(annotators.size()));

  nlohmann::json j;
  std::string table = "Aspect  alpha\n";
  for (std::size_t a = 0; a < data::kAspects; ++a) {
    analysis::RatingsMatrix m;
    m.metric = metric;
    for (const auto& [unit, per_annotator] : cells) {
      std::vector<std::optional<double>> row;
      for (const auto& ann : annotators) {
        const auto it = per_annotator.find(ann);
        row.push_back(it == per_annotator.end() ? std::nullopt : it->second[a]);
      }
      m.values.push_back(std::move(row));
    }
    const auto alpha = analysis::krippendorff_alpha(m);
    const std::string aspect_uc = [&] {
      std::string s = data::kAspectNames[a];
      for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      return s;
    }();
    if (alpha) {
      j[data::kAspectNames[a]] = *alpha;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%-6s %7.4f\n", aspect_uc.c_str(), *alpha);
      table += buf;
    } else {
      j[data::kAspectNames[a]] = nullptr;
      table += aspect_uc + "     n/a\n";
    }
  }
  std::cout << table;
  write_file(out_dir / "agreement.json", j.dump(2) + "\n");
  return 0;
}

int cmd_describe(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw ConfigError("describe: --corpus is required");
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "describe", out_dir);
  const data::Corpus corpus = data::parse_tsv(cfg.corpus);
  const auto desc = analysis::score_descriptives(corpus);
  std::cout << desc.table();
  write_file(out_dir / "describe.json", desc.json() + "\n");
  return 0;
}

int cmd_analyze_errors(const RunConfig& cfg) {
  if (cfg.errors.empty()) throw ConfigError("analyze-errors: --errors is required");
  const auto out_dir = prepare_out_dir(cfg);
  dump_resolved_config(cfg, "analyze-errors", out_dir);
  const auto profiles = analysis::parse_error_profiles(cfg.errors);
  analysis::Mat matrix(profiles.size(), analysis::kErrorTypes.size());
  for (std::size_t i = 0; i < profiles.size(); ++i)
    for (std::size_t j = 0; j < analysis::kErrorTypes.size(); ++j)
      matrix.at(i, j) = profiles[i].counts[j];

  const auto result = analysis::pca(matrix, cfg.components, cfg.standardize);
  const auto rotated = analysis::varimax(result.loadings);
  const auto cos2 = analysis::cos2_contributions(result);

  auto mat_json = [](const analysis::Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m.at(i, j));
      rows.push_back(row);
    }
    return rows;
  };

  nlohmann::json j;
  j["error_types"] = nlohmann::json::array();
  for (const char* t : analysis::kErrorTypes) j["error_types"].push_back(t);
  for (const auto& p : profiles) {
    j["ids"].push_back(p.id);
    j["labels"].push_back(p.label);
  }
  j["eigenvalues"] = result.eigenvalues;
  j["explained_ratio"] = result.explained_ratio;
  j["rank_deficient"] = result.rank_deficient;
  j["components"] = mat_json(result.components);
  j["loadings"] = mat_json(result.loadings);
  j["rotated_loadings"] = mat_json(rotated.rotated);
  j["rotation"] = mat_json(rotated.rotation);
  j["scores"] = mat_json(result.scores);
  for (std::size_t i = 0; i < cos2.cos2.size(); ++i) {
    if (cos2.cos2[i])
      j["cos2"].push_back(*cos2.cos2[i]);
    else
      j["cos2"].push_back(nullptr);
    j["shaded"].push_back(static_cast<bool>(cos2.shaded[i]));
  }
  write_file(out_dir / "error_analysis.json", j.dump(2) + "\n");
  std::cout << (out_dir / "error_analysis.json").string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  RunConfig cfg;

  // The config file is applied before flag parsing so flags win.
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) cfg.config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) cfg.config_path = args[i].substr(9);
  }

  CLI::App app{"fine-grained translation quality estimation"};
  app.require_subcommand(1);

  try {
    if (!cfg.config_path.empty()) apply_config_file(cfg, cfg.config_path);

    std::string conv_widths_arg;
    auto add_common = [&](CLI::App* sub) {
      sub->add_option("--config", cfg.config_path, "key=value config file");
      sub->add_option("--out", cfg.out, "output directory");
      sub->add_option("--seed", cfg.seed, "master seed");
    };
    auto add_model_flags = [&](CLI::App* sub) {
      sub->add_option("--embed-dim", cfg.embed_dim, "word embedding size");
      sub->add_option("--conv-widths", conv_widths_arg, "comma-separated window half-widths");
      sub->add_option("--conv-channels", cfg.conv_channels, "conv channels per width");
      sub->add_option("--hidden", cfg.hidden, "LSTM hidden size per direction");
      sub->add_option("--attention-dim", cfg.attention_dim, "attention dim (0 = 2*hidden)");
      sub->add_option("--lstm-layers", cfg.lstm_layers, "BiLSTM layer count");
      sub->add_flag("--share-attention", cfg.share_attention,
                    "share attention parameters between sides");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a corpus");
    add_common(train_cmd);
    add_model_flags(train_cmd);
    train_cmd->add_option("--corpus", cfg.corpus, "training corpus TSV");
    train_cmd->add_option("--src-embeddings", cfg.src_embeddings,
                          "pre-trained source embeddings (omit for seeded random)");
    train_cmd->add_option("--tgt-embeddings", cfg.tgt_embeddings,
                          "pre-trained target embeddings (omit for seeded random)");
    train_cmd->add_option("--checkpoint", cfg.checkpoint, "checkpoint output path");
    train_cmd->add_option("--epochs", cfg.epochs, "training epochs");
    train_cmd->add_option("--batch-size", cfg.batch_size, "batch size");
    train_cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    train_cmd->add_option("--lambda", cfg.lambda, "L2 regularization weight");
    train_cmd->add_option("--dropout", cfg.dropout, "dropout rate on conv features");
    train_cmd->add_option("--dev-fraction", cfg.dev_fraction,
                          "held-out fraction for model selection (0 = dev on train)");
    train_cmd->add_option("--n-train", cfg.n_train,
                          "split corpus and train on this many pairs");
    train_cmd->add_flag("--freeze-embeddings", cfg.freeze_embeddings,
                        "do not fine-tune embeddings");
    train_cmd->add_flag("--regularize-embeddings", cfg.regularize_embeddings,
                        "include embeddings in the L2 term");
    train_cmd->add_flag("--regularize-biases", cfg.regularize_biases,
                        "include biases in the L2 term");
    train_cmd->add_flag("--lowercase-source", cfg.lowercase_source,
                        "lowercase source tokens (GloVe-style vocabularies)");
    train_cmd->add_flag("--float32", cfg.float32, "store checkpoint tensors as float32");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a test corpus");
    add_common(eval_cmd);
    add_model_flags(eval_cmd);
    eval_cmd->add_option("--checkpoint", cfg.checkpoint, "trained checkpoint");
    eval_cmd->add_option("--corpus", cfg.corpus, "test corpus TSV");
    eval_cmd->add_flag("--clamped-metrics", cfg.clamped_metrics,
                       "compute metrics on clamped instead of raw predictions");

    CLI::App* predict_cmd = app.add_subcommand("predict", "append scores to sentence pairs");
    add_common(predict_cmd);
    add_model_flags(predict_cmd);
    predict_cmd->add_option("--checkpoint", cfg.checkpoint, "trained checkpoint");
    predict_cmd->add_option("--input", cfg.input, "2-column TSV (source, target)");

    CLI::App* attention_cmd =
        app.add_subcommand("attention", "attention weights for one pair");
    add_common(attention_cmd);
    add_model_flags(attention_cmd);
    attention_cmd->add_option("--checkpoint", cfg.checkpoint, "trained checkpoint");
    attention_cmd->add_option("--source", cfg.source_text, "source sentence (space-tokenized)");
    attention_cmd->add_option("--target", cfg.target_text, "target sentence (space-tokenized)");

    CLI::App* agreement_cmd =
        app.add_subcommand("agreement", "inter-annotator agreement per aspect");
    add_common(agreement_cmd);
    agreement_cmd->add_option("--ratings", cfg.ratings,
                              "CSV: unit,annotator,ut,ts,iw,tm (empty = missing)");
    agreement_cmd->add_option("--metric", cfg.agreement_metric,
                              "interval (default), nominal or ordinal");

    CLI::App* describe_cmd = app.add_subcommand("describe", "corpus score descriptives");
    add_common(describe_cmd);
    describe_cmd->add_option("--corpus", cfg.corpus, "corpus TSV");

    CLI::App* analyze_cmd =
        app.add_subcommand("analyze-errors", "PCA over translation error profiles");
    add_common(analyze_cmd);
    analyze_cmd->add_option("--errors", cfg.errors, "error-profile CSV");
    analyze_cmd->add_option("--components", cfg.components, "PCA components to retain");
    analyze_cmd->add_flag("--standardize", cfg.standardize,
                          "scale columns to unit variance before PCA");

    CLI::App* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic corpus");
    add_common(gen_cmd);
    gen_cmd->add_option("--n", cfg.n, "number of pairs");

    std::vector<const char*> argv;
    argv.push_back("tqe");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      std::cout << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      std::cerr << e.what() << "\n\n" << app.help();
      return 2;
    }

    if (!conv_widths_arg.empty()) cfg.conv_widths = parse_width_list(conv_widths_arg, "flag");

    const bool model_flags_given =
        eval_cmd->count("--hidden") || eval_cmd->count("--conv-widths") ||
        eval_cmd->count("--embed-dim") || eval_cmd->count("--conv-channels") ||
        eval_cmd->count("--lstm-layers") || eval_cmd->count("--attention-dim") ||
        predict_cmd->count("--hidden") || predict_cmd->count("--conv-widths") ||
        predict_cmd->count("--embed-dim") || predict_cmd->count("--conv-channels") ||
        predict_cmd->count("--lstm-layers") || predict_cmd->count("--attention-dim") ||
        attention_cmd->count("--hidden") || attention_cmd->count("--conv-widths") ||
        attention_cmd->count("--embed-dim") || attention_cmd->count("--conv-channels") ||
        attention_cmd->count("--lstm-layers") || attention_cmd->count("--attention-dim");

    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, model_flags_given);
    if (predict_cmd->parsed()) return cmd_predict(cfg, model_flags_given);
    if (attention_cmd->parsed()) return cmd_attention(cfg, model_flags_given);
    if (agreement_cmd->parsed()) return cmd_agreement(cfg);
    if (describe_cmd->parsed()) return cmd_describe(cfg);
    if (analyze_cmd->parsed()) return cmd_analyze_errors(cfg);
    if (gen_cmd->parsed()) return cmd_gen_synthetic(cfg);
    std::cerr << app.help();
    return 2;
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 2;
  } catch (const ParseError& e) {
    log_error(e.what());
    return 3;
  } catch (const NumericError& e) {
    log_error(e.what());
    return 1;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
}

}  // namespace tqe::cli
