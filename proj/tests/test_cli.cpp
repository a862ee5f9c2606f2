#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "tqe/cli.hpp"
#include "tqe/util.hpp"

using namespace tqe;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) { return cli::run(args); }

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tqe_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << content;
}

const std::vector<std::string> kTinyModelFlags{
    "--embed-dim", "6", "--conv-channels", "5", "--hidden", "4"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyModelFlags.begin(), kTinyModelFlags.end());
  return args;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}) == 2);
  CHECK(run({"no-such-command"}) == 2);
  CHECK(run({"train", "--out", fresh_dir("usage").string()}) == 2);  // missing corpus
  CHECK(run({"train", "--no-such-flag"}) == 2);
}

TEST_CASE("missing or malformed files exit with 3") {
  const auto out = fresh_dir("files");
  CHECK(run({"describe", "--corpus", (out / "missing.tsv").string(),
             "--out", out.string()}) == 3);

  const auto bad = out / "bad.tsv";
  write(bad, "only two\tfields\n");
  CHECK(run({"describe", "--corpus", bad.string(), "--out", out.string()}) == 3);

  const auto out_of_range = out / "range.tsv";
  write(out_of_range, "a\tb\t36\t0\t0\t0\n");
  CHECK(run({"describe", "--corpus", out_of_range.string(), "--out", out.string()}) == 3);
}

TEST_CASE("unknown config keys are errors") {
  const auto out = fresh_dir("cfg");
  const auto cfg = out / "run.cfg";
  write(cfg, "epochs=2\nnot_a_key=1\n");
  CHECK(run({"gen-synthetic", "--config", cfg.string(), "--out", out.string()}) == 2);

  const auto good = out / "good.cfg";
  write(good, "# comment\nn=5\nseed=9\n");
  CHECK(run({"gen-synthetic", "--config", good.string(), "--out", out.string()}) == 0);
  CHECK(fs::exists(out / "synthetic.tsv"));
}

TEST_CASE("flags override config file values") {
  const auto out = fresh_dir("override");
  const auto cfg = out / "run.cfg";
  write(cfg, "n=3\n");
  CHECK(run({"gen-synthetic", "--config", cfg.string(), "--n", "6",
             "--out", out.string()}) == 0);
  std::ifstream f(out / "synthetic.tsv");
  std::size_t lines = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 6);
}

TEST_CASE("gen-synthetic is byte-identical across runs") {
  const auto a = fresh_dir("gen_a");
  const auto b = fresh_dir("gen_b");
  CHECK(run({"gen-synthetic", "--n", "32", "--seed", "7", "--out", a.string()}) == 0);
  CHECK(run({"gen-synthetic", "--n", "32", "--seed", "7", "--out", b.string()}) == 0);
  CHECK(read_file(a / "synthetic.tsv") == read_file(b / "synthetic.tsv"));
  CHECK(fs::exists(a / "resolved_config.json"));
}

TEST_CASE("train then evaluate on a synthetic corpus") {
  const auto out = fresh_dir("train_eval");
  REQUIRE(run({"gen-synthetic", "--n", "16", "--seed", "5", "--out", out.string()}) == 0);
  const auto corpus = (out / "synthetic.tsv").string();

  CHECK(run(with_tiny({"train", "--corpus", corpus, "--out", out.string(),
                       "--epochs", "2", "--batch-size", "8", "--dropout", "0",
                       "--seed", "11"})) == 0);
  CHECK(fs::exists(out / "checkpoint.tqe"));
  CHECK(fs::exists(out / "training_log.jsonl"));

  // training log: one JSON record per epoch with the expected fields
  std::ifstream log(out / "training_log.jsonl");
  std::string line;
  std::size_t records = 0;
  while (std::getline(log, line)) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec.contains("epoch"));
    CHECK(rec.contains("train_loss"));
    CHECK(rec.contains("dev_pearson"));
    CHECK(rec.contains("dev_mse"));
    ++records;
  }
  CHECK(records == 2);

  CHECK(run({"evaluate", "--checkpoint", (out / "checkpoint.tqe").string(),
             "--corpus", corpus, "--out", out.string()}) == 0);
  const auto report = nlohmann::json::parse(read_file(out / "eval_report.json"));
  for (const char* aspect : {"ut", "ts", "iw", "tm"}) {
    CHECK(report["aspects"].contains(aspect));
    CHECK(report["aspects"][aspect].contains("pearson"));
    CHECK(report["aspects"][aspect].contains("spearman"));
    CHECK(report["aspects"][aspect].contains("mse"));
  }
}

TEST_CASE("two train runs with one seed produce identical logs and checkpoints") {
  const auto base = fresh_dir("det");
  REQUIRE(run({"gen-synthetic", "--n", "12", "--seed", "3", "--out", base.string()}) == 0);
  const auto corpus = (base / "synthetic.tsv").string();

  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  const std::vector<std::string> common{"--corpus",    corpus, "--epochs", "2",
                                        "--batch-size", "4",   "--seed",   "21"};
  auto run_in = [&](const fs::path& dir) {
    auto args = with_tiny({"train"});
    args.insert(args.end(), common.begin(), common.end());
    args.push_back("--out");
    args.push_back(dir.string());
    REQUIRE(run(args) == 0);
  };
  run_in(a);
  run_in(b);
  CHECK(read_file(a / "training_log.jsonl") == read_file(b / "training_log.jsonl"));
  CHECK(read_file(a / "checkpoint.tqe") == read_file(b / "checkpoint.tqe"));
}

TEST_CASE("predict writes a 6-column TSV with clamped scores appended") {
  const auto out = fresh_dir("predict");
  REQUIRE(run({"gen-synthetic", "--n", "10", "--seed", "13", "--out", out.string()}) == 0);
  const auto corpus = (out / "synthetic.tsv").string();
  REQUIRE(run(with_tiny({"train", "--corpus", corpus, "--out", out.string(),
                         "--epochs", "1", "--batch-size", "8", "--dropout", "0"})) == 0);

  const auto input = out / "pairs.tsv";
  write(input, "trade market\tmaoyi shichang\nbank loan deal\tyinhang daikuan\n");
  CHECK(run({"predict", "--checkpoint", (out / "checkpoint.tqe").string(),
             "--input", input.string(), "--out", out.string()}) == 0);

  std::ifstream f(out / "predictions.tsv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    ++rows;
    CHECK(split_on(line, '\t').size() == 6);
  }
  CHECK(rows == 2);

  // malformed input: wrong column count
  const auto bad = out / "bad_pairs.tsv";
  write(bad, "one-column-only\n");
  CHECK(run({"predict", "--checkpoint", (out / "checkpoint.tqe").string(),
             "--input", bad.string(), "--out", out.string()}) == 3);
}

TEST_CASE("attention emits a weight-per-token JSON record") {
  const auto out = fresh_dir("attention");
  REQUIRE(run({"gen-synthetic", "--n", "8", "--seed", "17", "--out", out.string()}) == 0);
  REQUIRE(run(with_tiny({"train", "--corpus", (out / "synthetic.tsv").string(),
                         "--out", out.string(), "--epochs", "1", "--batch-size", "8",
                         "--dropout", "0"})) == 0);
  CHECK(run({"attention", "--checkpoint", (out / "checkpoint.tqe").string(),
             "--source", "trade market price", "--target", "maoyi jiage",
             "--out", out.string()}) == 0);
  const auto j = nlohmann::json::parse(read_file(out / "attention.json"));
  REQUIRE(j["source"].size() == 3);
  REQUIRE(j["target"].size() == 2);
  double sum = 0;
  for (const auto& tok : j["source"]) sum += tok["weight"].get<double>();
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(j.contains("scores_raw"));
  CHECK(j.contains("scores_clamped"));
}

TEST_CASE("corrupt checkpoints exit with 3") {
  const auto out = fresh_dir("ckpt");
  const auto bogus = out / "bogus.tqe";
  write(bogus, "not a checkpoint at all");
  CHECK(run({"evaluate", "--checkpoint", bogus.string(),
             "--corpus", bogus.string(), "--out", out.string()}) == 3);

  // truncated real checkpoint
  REQUIRE(run({"gen-synthetic", "--n", "8", "--seed", "19", "--out", out.string()}) == 0);
  const auto corpus = (out / "synthetic.tsv").string();
  REQUIRE(run(with_tiny({"train", "--corpus", corpus, "--out", out.string(),
                         "--epochs", "1", "--batch-size", "8", "--dropout", "0"})) == 0);
  const std::string blob = read_file(out / "checkpoint.tqe");
  const auto cut = out / "cut.tqe";
  write(cut, blob.substr(0, blob.size() / 2));
  CHECK(run({"evaluate", "--checkpoint", cut.string(), "--corpus", corpus,
             "--out", out.string()}) == 3);

  // config mismatch between checkpoint and explicit model flags
  CHECK(run({"evaluate", "--checkpoint", (out / "checkpoint.tqe").string(),
             "--corpus", corpus, "--out", out.string(), "--hidden", "16"}) == 2);
}

TEST_CASE("agreement computes per-aspect alpha from a long CSV") {
  const auto out = fresh_dir("agreement");
  const auto csv = out / "ratings.csv";
  write(csv,
        "unit,annotator,ut,ts,iw,tm\n"
        "u1,a,30,20,20,12\n"
        "u1,b,30,20,21,12\n"
        "u2,a,10,5,8,4\n"
        "u2,b,12,5,9,4\n"
        "u3,a,22,15,14,9\n"
        "u3,b,22,16,14,9\n");
  CHECK(run({"agreement", "--ratings", csv.string(), "--out", out.string()}) == 0);
  const auto j = nlohmann::json::parse(read_file(out / "agreement.json"));
  for (const char* aspect : {"ut", "ts", "iw", "tm"}) {
    REQUIRE(j.contains(aspect));
    CHECK(j[aspect].get<double>() <= 1.0);
    CHECK(j[aspect].get<double>() > 0.5);  // near agreement in the fixture
  }

  const auto bad = out / "bad.csv";
  write(bad, "wrong,header\n");
  CHECK(run({"agreement", "--ratings", bad.string(), "--out", out.string()}) == 3);

  CHECK(run({"agreement", "--ratings", csv.string(), "--metric", "bogus",
             "--out", out.string()}) == 2);
}

TEST_CASE("describe emits the six-row descriptive table") {
  const auto out = fresh_dir("describe");
  REQUIRE(run({"gen-synthetic", "--n", "20", "--seed", "23", "--out", out.string()}) == 0);
  CHECK(run({"describe", "--corpus", (out / "synthetic.tsv").string(),
             "--out", out.string()}) == 0);
  const auto j = nlohmann::json::parse(read_file(out / "describe.json"));
  for (const char* aspect : {"ut", "ts", "iw", "tm", "total"})
    for (const char* stat : {"min", "q1", "median", "mean", "q3", "max"})
      CHECK(j[aspect].contains(stat));
}

TEST_CASE("analyze-errors writes a plot-ready PCA JSON") {
  const auto out = fresh_dir("errors");
  const auto csv = out / "profiles.csv";
  std::string content =
      "id,label,mistranslation,omission,awkward,punctuation,undertranslation,"
      "unidiomatic,grammar,addition,spelling,terminology,untranslated\n";
  content += "ht1,HT,2,3,4,0,2,1,0,1,0,0,0\n";
  content += "ht2,HT,1,4,3,1,3,2,0,0,0,1,0\n";
  content += "mt1,MT,5,1,1,2,0,1,4,0,2,1,3\n";
  content += "mt2,MT,4,0,2,1,1,0,5,1,1,0,2\n";
  content += "mt3,MT,6,2,1,3,1,2,3,0,1,1,4\n";
  write(csv, content);
  CHECK(run({"analyze-errors", "--errors", csv.string(), "--out", out.string()}) == 0);
  const auto j = nlohmann::json::parse(read_file(out / "error_analysis.json"));
  CHECK(j["ids"].size() == 5);
  CHECK(j["labels"].size() == 5);
  CHECK(j["scores"].size() == 5);
  CHECK(j["cos2"].size() == 5);
  CHECK(j["shaded"].size() == 5);
  CHECK(j["error_types"].size() == 11);
  CHECK(j["rotation"].size() == j["loadings"][0].size());

  const auto bad = out / "bad.csv";
  write(bad, "id,label,mistranslation\nx,HT,1\n");
  CHECK(run({"analyze-errors", "--errors", bad.string(), "--out", out.string()}) == 3);
}

TEST_CASE("every run leaves a resolved config dump in the out dir") {
  const auto out = fresh_dir("resolved");
  REQUIRE(run({"gen-synthetic", "--n", "4", "--seed", "29", "--out", out.string()}) == 0);
  const auto j = nlohmann::json::parse(read_file(out / "resolved_config.json"));
  CHECK(j["command"] == "gen-synthetic");
  CHECK(j["n"] == 4);
  CHECK(j["seed"] == 29);
  CHECK(j.contains("lr"));
  CHECK(j.contains("dropout"));
}
