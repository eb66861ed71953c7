#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support/temp_dir.h"
#include "support/text_file.h"
#include "xalign/pipeline.h"

using namespace xalign;
using nlohmann::json;
using testing::TempDir;

namespace {

json small_synth_config() {
  return json::parse(R"({
    "seed": 3,
    "data": {"synth": {"vocab_size": 100, "corpus_size": 300, "dim": 8}},
    "pairs": {"source": "gold"},
    "split": {"test": 50, "dev": 50, "filter_eval": false},
    "align": {"method": "rotation"}
  })");
}

RunConfig config_in(const json& j, const std::filesystem::path& out) {
  RunConfig cfg = RunConfig::from_json(j);
  cfg.output_dir = out;
  return cfg;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Runs the CLI with stdout and stderr captured in `log`; returns the exit code.
int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("'") + XALIGN_CLI_PATH + "' " + args + " > " +
                          quoted(log) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Manifest with its creation timestamp removed.
json manifest_without_time(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  json m = json::parse(in);
  m.erase("created_at");
  return m;
}

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.find(needle) != std::string::npos;
  return n;
}

}  // namespace

TEST_CASE("run config defaults") {
  const RunConfig cfg = RunConfig::from_json(json::parse(R"({"data": {"synth": {}}})"));
  CHECK(cfg.align.base_lr == 5e-5);
  CHECK(cfg.align.beta1 == 0.9);
  CHECK(cfg.align.beta2 == 0.98);
  CHECK(cfg.align.epsilon == 1e-9);
  CHECK(cfg.align.warmup_fraction == 0.1);
  CHECK(cfg.align.epochs == 1);
  CHECK(cfg.align.pairs_per_language == 2);
  CHECK(cfg.align.lambda == 1.0);
  CHECK(cfg.eval.sim == Similarity::kCsls);
  CHECK(cfg.eval.k == 10);
  CHECK(cfg.test_n == 1024);
  CHECK(cfg.dev_n == 1024);
  CHECK(cfg.train_n == 250000);
  CHECK(cfg.pair_source == PairSource::kGold);
  CHECK_FALSE(cfg.language_codes);
}

TEST_CASE("run config rejects bad input") {
  auto rejects = [](const char* text) {
    CAPTURE(text);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(text)), UsageError);
  };
  rejects(R"({})");
  rejects(R"({"data": {"synth": {}}, "bogus": 1})");
  rejects(R"({"data": {"synth": {"bogus": 1}}})");
  rejects(R"({"data": {"synth": {}}, "align": {"lamda": 1}})");
  rejects(R"({"data": {"synth": {}, "paths": {}}})");
  rejects(R"({"data": {"synth": {}}, "align": {"schedule": "cosine"}})");
  rejects(R"({"data": {"synth": {}}, "align": {"lambda": -1}})");
  rejects(R"({"data": {"synth": {}}, "align": {"mapper": "linear", "language_codes": true}})");
  rejects(R"({"data": {"synth": {}}, "eval": {"k": 0}})");
  rejects(R"({"data": {"synth": {}}, "pairs": {"source": "external"}})");
  rejects(R"({"data": {"paths": {"src_text": "a", "tgt_text": "b", "src_embeddings": "c",
              "tgt_embeddings": "d"}}, "pairs": {"source": "gold"}})");
  rejects(R"({"data": {"synth": {"distortion": "cubic"}}})");
}

TEST_CASE("run config round-trips through json") {
  json j = small_synth_config();
  j["align"] = {{"method", "finetune"}, {"mapper", "residual-mlp"}, {"language_codes", true},
                {"schedule", "linear"}, {"epochs", 2}};
  const RunConfig a = RunConfig::from_json(j);
  const RunConfig b = RunConfig::from_json(json::parse(a.to_json().dump()));
  CHECK(a.to_json() == b.to_json());
  CHECK(b.language_codes);
  CHECK(b.align.schedule == LrSchedule::kLinearDecay);
}

TEST_CASE("paths data defaults to ibm1 pairs") {
  const RunConfig cfg = RunConfig::from_json(json::parse(R"({"data": {"paths": {
      "src_text": "a", "tgt_text": "b", "src_embeddings": "c", "tgt_embeddings": "d"}}})"));
  CHECK(cfg.pair_source == PairSource::kIbm1);
}

TEST_CASE("rotation run writes a verifiable manifest") {
  TempDir dir;
  const RunResult r = run_pipeline(config_in(small_synth_config(), dir.path()));
  CHECK(r.baseline.mean_accuracy < 0.1);
  CHECK(r.aligned.mean_accuracy > 0.9);

  std::ifstream in(r.manifest);
  const json m = json::parse(in);
  CHECK(m["seed"] == 3);
  CHECK(m["version"] == kToolVersion);
  CHECK(m["config_hash"].get<std::string>().rfind("fnv1a64:", 0) == 0);
  CHECK_FALSE(m["config"].contains("output_dir"));
  std::vector<std::string> paths;
  for (const auto& o : m["outputs"]) paths.push_back(o["path"]);
  for (const char* want : {"data/gold_map.crot", "data/pairs.txt", "rotation.crot",
                           "report.json", "report_baseline.json", "report_pairs.csv"}) {
    CAPTURE(want);
    CHECK(std::find(paths.begin(), paths.end(), want) != paths.end());
  }
  CHECK(verify_manifest(dir.path()).empty());

  testing::write_text(dir / "report.json", "{}");
  const auto bad = verify_manifest(dir.path());
  REQUIRE(bad.size() == 1);
  CHECK(bad[0].find("report.json") != std::string::npos);
}

TEST_CASE("finetune run with ibm1 pairs is byte-for-byte reproducible") {
  json j = small_synth_config();
  j["data"]["synth"]["distortion"] = "orthogonal+tanh";
  j["pairs"] = {{"source", "ibm1"}, {"iterations", 5}};
  j["align"] = {{"method", "finetune"}, {"mapper", "residual-mlp"}, {"language_codes", true},
                {"lr", 1e-2}, {"epochs", 2}};
  TempDir a, b;
  run_pipeline(config_in(j, a.path()));
  run_pipeline(config_in(j, b.path()));
  CHECK(manifest_without_time(a.path()) == manifest_without_time(b.path()));
  for (const char* f : {"report.json", "mapper.cmap", "trace.csv", "pairs.txt"}) {
    CAPTURE(f);
    CHECK(testing::read_bytes(a / f) == testing::read_bytes(b / f));
  }
}

TEST_CASE("stage failures name the stage") {
  TempDir dir;
  json j = small_synth_config();
  j["pairs"] = {{"source", "external"}, {"path", (dir / "missing.txt").string()}};
  try {
    run_pipeline(config_in(j, dir / "out"));
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "pairs");
    CHECK(e.kind() == ErrorKind::kData);
    CHECK(std::string(e.what()).rfind("[pairs]", 0) == 0);
  }

  testing::write_text(dir / "cfg.json", j.dump());
  const int code = run_cli("run --config " + quoted(dir / "cfg.json") + " --out " +
                               quoted(dir / "cli_out"),
                           dir / "log.txt");
  CHECK(code == 2);
  CHECK(testing::read_bytes(dir / "log.txt").find("[pairs]") != std::string::npos);
}

TEST_CASE("cli exit codes") {
  TempDir dir;
  CHECK(run_cli("", dir / "log.txt") == 1);
  CHECK(run_cli("eval --bogus", dir / "log.txt") == 1);
  CHECK(run_cli("report " + quoted(dir / "nowhere"), dir / "log.txt") == 2);
}

TEST_CASE("cli eval and query on a synthetic bundle") {
  TempDir dir;
  const auto b = dir / "bundle";
  REQUIRE(run_cli("synth --out " + quoted(b) + " --vocab 100 --sentences 200 --dim 8 --seed 2",
                  dir / "log.txt") == 0);
  const std::string corpus = "--src-text " + quoted(b / "src.txt") + " --tgt-text " +
                             quoted(b / "tgt.txt") + " --pairs " + quoted(b / "pairs.txt") +
                             " --src-emb " + quoted(b / "src.ctxe") + " --tgt-emb " +
                             quoted(b / "tgt.ctxe");

  REQUIRE(run_cli("eval " + corpus + " --map " + quoted(b / "gold_map.crot") +
                      " --sim csls --k 10 --out " + quoted(dir / "report.json"),
                  dir / "log.txt") == 0);
  std::ifstream in(dir / "report.json");
  const json report = json::parse(in);
  CHECK(report["sim"] == "csls");
  CHECK(report["k"] == 10);
  CHECK(report["bidirectional_mean"].get<double>() > 0.9);

  REQUIRE(run_cli("query " + corpus + " --sentence 0 --token 1 --top 4", dir / "log.txt") == 0);
  const std::string out = testing::read_bytes(dir / "log.txt");
  CHECK(count_lines_with(out, "] \"") == 4);
  CHECK(out.rfind("query: ", 0) == 0);
}
