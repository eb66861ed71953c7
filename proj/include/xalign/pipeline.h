#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xalign/align.h"
#include "xalign/error.h"
#include "xalign/retrieval.h"
#include "xalign/synth.h"

namespace xalign {

inline constexpr const char* kToolVersion = "0.1.0";

enum class PairSource { kGold, kIbm1, kExternal };
enum class AlignMethod { kNone, kRotation, kSentenceRotation, kFinetune };

std::string to_string(AlignMethod method);
AlignMethod align_method_from_string(const std::string& name);

struct DataPaths {
  std::filesystem::path src_text;
  std::filesystem::path tgt_text;
  std::filesystem::path src_embeddings;
  std::filesystem::path tgt_embeddings;
  std::string src_language = "src";
  std::string tgt_language = "tgt";
};

// Parsed run configuration. Defaults follow the reference training setup:
// Adam lr 5e-5, β (0.9, 0.98), ε 1e-9, 10% warmup, one epoch, two sentence
// pairs per language per batch, λ = 1, CSLS with k = 10.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "xalign_out";
  std::size_t threads = 1;

  std::optional<SynthConfig> synth;
  std::optional<DataPaths> paths;

  PairSource pair_source = PairSource::kGold;
  int ibm1_iterations = 10;
  std::filesystem::path pairs_path;

  std::size_t test_n = 1024;
  std::size_t dev_n = 1024;
  std::size_t train_n = 250000;
  bool filter_eval = true;

  AlignMethod method = AlignMethod::kRotation;
  MapperKind mapper_kind = MapperKind::kLinear;
  std::size_t hidden_dim = 0;
  bool language_codes = false;  // residual-mlp only: per-language hidden bias
  AlignConfig align;

  EvalOptions eval;
  bool eval_pairs_csv = true;

  std::optional<std::filesystem::path> pos_tags;  // indices refer to the full corpus
  std::vector<double> bin_edges;
  std::size_t projection_pairs = 200;

  // Throws UsageError on schema violations (unknown keys included).
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

struct RunResult {
  RetrievalReport baseline;  // unaligned embeddings
  RetrievalReport aligned;
  std::filesystem::path manifest;
};

// Thrown for any stage failure; `stage` names the pipeline step.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), "[" + stage + "] " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// data → pairs → split → align → eval → analysis, then manifest.json with
// the config hash, seed, tool version and FNV-1a checksums of every output.
RunResult run_pipeline(const RunConfig& cfg);

// Checks every checksum listed in <dir>/manifest.json; returns mismatching
// or missing files.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

}  // namespace xalign
