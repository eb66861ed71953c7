// xalign command-line driver.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xalign/align.h"
#include "xalign/analysis.h"
#include "xalign/corpus.h"
#include "xalign/embed.h"
#include "xalign/numeric/random.h"
#include "xalign/error.h"
#include "xalign/pipeline.h"
#include "xalign/retrieval.h"
#include "xalign/synth.h"
#include "xalign/wordpairs.h"

namespace fs = std::filesystem;
using namespace xalign;

namespace {

constexpr int kExitUsage = 1;

fs::path default_output_dir() {
  if (const char* env = std::getenv("XALIGN_OUTPUT_DIR"); env && *env) return env;
  return "xalign_out";
}

// Resolves a relative output path against the default output directory.
fs::path output_path(const std::string& given, const std::string& fallback_name) {
  if (!given.empty()) return given;
  const fs::path dir = default_output_dir();
  fs::create_directories(dir);
  return dir / fallback_name;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// Files describing one evaluated corpus and its embeddings.
struct CorpusArgs {
  std::string src_text, tgt_text, pairs, src_emb, tgt_emb;
  std::string src_lang = "src", tgt_lang = "tgt";

  void add_to(CLI::App* app, bool need_pairs) {
    app->add_option("--src-text", src_text, "Source sentences, one per line")->required();
    app->add_option("--tgt-text", tgt_text, "Target sentences, one per line")->required();
    auto* p = app->add_option("--pairs", pairs, "Pharaoh word pairs, one line per sentence");
    if (need_pairs) p->required();
    app->add_option("--src-emb", src_emb, "Source contextual embeddings (.ctxe)")->required();
    app->add_option("--tgt-emb", tgt_emb, "Target contextual embeddings (.ctxe)")->required();
    app->add_option("--src-lang", src_lang, "Source language code");
    app->add_option("--tgt-lang", tgt_lang, "Target language code");
  }

  ParallelCorpus corpus() const {
    return pairs.empty() ? load_parallel_text(src_text, tgt_text, src_lang, tgt_lang)
                         : load_parallel_corpus(src_text, tgt_text, pairs, src_lang, tgt_lang);
  }

  std::pair<ContextualEmbeddingSet, ContextualEmbeddingSet> embeddings(
      const ParallelCorpus& c) const {
    auto s = load_embeddings(src_emb);
    auto t = load_embeddings(tgt_emb);
    s.check_covers(source_side(c));
    t.check_covers(target_side(c));
    return {std::move(s), std::move(t)};
  }
};

// Applies a saved rotation (source side only) or mapper (both sides).
void apply_map(const std::string& path, ContextualEmbeddingSet& src, ContextualEmbeddingSet& tgt) {
  if (path.empty()) return;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  const std::string m(magic, 4);
  if (m == "CROT") {
    src = rotation_apply(load_rotation(path), src);
  } else if (m == "CMAP") {
    const Mapper mapper = load_mapper(path);
    src = mapper.apply(src, mapper.languages() > 0 ? 1 : 0);
    tgt = mapper.apply(tgt, 0);
  } else {
    throw DataError(path + ": not a rotation or mapper file");
  }
}

struct EvalArgs {
  std::string sim = "csls";
  std::size_t k = 10;
  std::string mode = "contextual";

  void add_to(CLI::App* app) {
    app->add_option("--sim", sim, "Similarity: cosine or csls")
        ->check(CLI::IsMember({"cosine", "csls"}));
    app->add_option("--k", k, "CSLS neighborhood size")->check(CLI::PositiveNumber);
    app->add_option("--mode", mode, "contextual or non-contextual")
        ->check(CLI::IsMember({"contextual", "non-contextual"}));
  }

  EvalOptions options(std::size_t threads) const {
    EvalOptions o;
    o.sim = similarity_from_string(sim);
    o.k = k;
    o.mode = mode_from_string(mode);
    o.scoring.threads = threads;
    return o;
  }
};

std::vector<double> parse_bins(const std::vector<std::string>& raw) {
  if (raw.empty()) return default_frequency_bin_edges();
  std::vector<double> out;
  for (const auto& r : raw) {
    if (r == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    try {
      std::size_t used = 0;
      out.push_back(std::stod(r, &used));
      if (used != r.size()) throw std::invalid_argument(r);
    } catch (const std::exception&) {
      throw UsageError("bad bin edge '" + r + "'");
    }
  }
  return out;
}

// "a.b.c=value": value parsed as JSON when possible, otherwise a string.
void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("--set expects key.path=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::string pointer = "/" + key;
  for (char& c : pointer)
    if (c == '.') c = '/';
  config[nlohmann::json::json_pointer(pointer)] = value;
}

int run_main(int argc, char** argv) {
  CLI::App app{"Cross-lingual contextual embedding alignment toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads for scoring")
      ->check(CLI::PositiveNumber);

  // synth -------------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic benchmark bundle");
  SynthConfig sc;
  std::string synth_out, distortion = "orthogonal";
  synth_cmd->add_option("--out", synth_out, "Output directory");
  synth_cmd->add_option("--vocab", sc.vocab_size, "Vocabulary size");
  synth_cmd->add_option("--sentences", sc.corpus_size, "Number of sentence pairs");
  synth_cmd->add_option("--min-len", sc.min_length, "Minimum sentence length");
  synth_cmd->add_option("--max-len", sc.max_length, "Maximum sentence length");
  synth_cmd->add_option("--dim", sc.dim, "Embedding dimension");
  synth_cmd->add_option("--alpha", sc.context_mix, "Context mixing weight");
  synth_cmd->add_option("--noise", sc.noise, "Target noise standard deviation");
  synth_cmd->add_option("--swap", sc.swap_prob, "Adjacent swap probability");
  synth_cmd->add_option("--distortion", distortion, "orthogonal or orthogonal+tanh");
  synth_cmd->add_option("--seed", sc.seed, "Random seed");

  // extract-pairs -----------------------------------------------------------
  auto* pairs_cmd = app.add_subcommand("extract-pairs", "IBM Model 1 word pairs (intersection)");
  std::string ep_src, ep_tgt, ep_out, ep_table;
  int ep_iters = 10;
  pairs_cmd->add_option("--src-text", ep_src, "Source sentences")->required();
  pairs_cmd->add_option("--tgt-text", ep_tgt, "Target sentences")->required();
  pairs_cmd->add_option("--iterations", ep_iters, "EM iterations")->check(CLI::PositiveNumber);
  pairs_cmd->add_option("--out", ep_out, "Output Pharaoh file");
  pairs_cmd->add_option("--table", ep_table, "Write the forward translation table (TSV)");

  // align -------------------------------------------------------------------
  auto* align_cmd = app.add_subcommand("align", "Fit a rotation or fine-tune a mapper");
  CorpusArgs align_in;
  align_in.add_to(align_cmd, true);
  std::string method = "rotation", mapper_kind = "residual-mlp", schedule = "constant";
  std::string align_out, trace_out;
  std::size_t hidden = 0;
  bool language_codes = false;
  AlignConfig acfg;
  std::uint64_t align_seed = 0;
  align_cmd->add_option("--method", method, "rotation, sentence-rotation or finetune")
      ->check(CLI::IsMember({"rotation", "sentence-rotation", "finetune"}));
  align_cmd->add_option("--mapper", mapper_kind, "linear or residual-mlp")
      ->check(CLI::IsMember({"linear", "residual-mlp"}));
  align_cmd->add_option("--hidden", hidden, "Hidden width of the residual MLP (default: dim)");
  align_cmd->add_flag("--language-codes", language_codes,
                      "Give the residual MLP a per-language hidden bias");
  align_cmd->add_option("--lambda", acfg.lambda, "Anchor regularizer weight");
  align_cmd->add_option("--lr", acfg.base_lr, "Adam learning rate");
  align_cmd->add_option("--beta1", acfg.beta1, "Adam beta1");
  align_cmd->add_option("--beta2", acfg.beta2, "Adam beta2");
  align_cmd->add_option("--epsilon", acfg.epsilon, "Adam epsilon");
  align_cmd->add_option("--warmup", acfg.warmup_fraction, "Warmup fraction of steps");
  align_cmd->add_option("--epochs", acfg.epochs, "Epochs over the largest corpus");
  align_cmd->add_option("--batch", acfg.pairs_per_language, "Sentence pairs per language");
  align_cmd->add_option("--schedule", schedule, "constant or linear")
      ->check(CLI::IsMember({"constant", "linear"}));
  align_cmd->add_option("--seed", align_seed, "Random seed");
  align_cmd->add_option("--out", align_out, "Output map (.crot or .cmap)");
  align_cmd->add_option("--trace", trace_out, "Training trace CSV (finetune)");

  // eval --------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Bidirectional word retrieval accuracy");
  CorpusArgs eval_in;
  eval_in.add_to(eval_cmd, true);
  EvalArgs eval_args;
  eval_args.add_to(eval_cmd);
  std::string eval_map, eval_out, eval_csv;
  eval_cmd->add_option("--map", eval_map, "Rotation (.crot) or mapper (.cmap) to apply");
  eval_cmd->add_option("--out", eval_out, "Report JSON");
  eval_cmd->add_option("--pairs-csv", eval_csv, "Per-pair CSV dump");

  // analyze-pos -------------------------------------------------------------
  auto* pos_cmd = app.add_subcommand("analyze-pos", "Retrieval accuracy by POS tag and group");
  std::string pos_report, pos_tags, pos_out;
  pos_cmd->add_option("--report-csv", pos_report, "Per-pair CSV from eval")->required();
  pos_cmd->add_option("--pos", pos_tags, "POS tags TSV (sentence, token, UPOS)")->required();
  pos_cmd->add_option("--out", pos_out, "Output prefix (writes .csv and .json)");

  // analyze-freq ------------------------------------------------------------
  auto* freq_cmd = app.add_subcommand("analyze-freq", "Accuracy by frequency-rank difference");
  std::string fq_report, fq_src, fq_tgt, fq_pairs, fq_train_src, fq_train_tgt, fq_out;
  std::vector<std::string> fq_bins;
  freq_cmd->add_option("--report-csv", fq_report, "Per-pair CSV from eval")->required();
  freq_cmd->add_option("--src-text", fq_src, "Evaluated source sentences")->required();
  freq_cmd->add_option("--tgt-text", fq_tgt, "Evaluated target sentences")->required();
  freq_cmd->add_option("--pairs", fq_pairs, "Evaluated word pairs")->required();
  freq_cmd->add_option("--train-src", fq_train_src, "Source text for frequency ranks")->required();
  freq_cmd->add_option("--train-tgt", fq_train_tgt, "Target text for frequency ranks")->required();
  freq_cmd->add_option("--bins", fq_bins, "Bin edges (use 'inf' for the last)");
  freq_cmd->add_option("--out", fq_out, "Output CSV");

  // project -----------------------------------------------------------------
  auto* proj_cmd = app.add_subcommand("project", "2-D PCA dump of paired vectors");
  CorpusArgs proj_in;
  proj_in.add_to(proj_cmd, true);
  std::string proj_map, proj_out, proj_phase = "pre";
  std::size_t proj_limit = 200;
  proj_cmd->add_option("--map", proj_map, "Rotation or mapper to apply first");
  proj_cmd->add_option("--phase", proj_phase, "Label written in the phase column");
  proj_cmd->add_option("--limit", proj_limit, "Maximum number of word pairs");
  proj_cmd->add_option("--out", proj_out, "Output CSV");

  // query -------------------------------------------------------------------
  auto* query_cmd = app.add_subcommand("query", "Nearest target occurrences of a source token");
  CorpusArgs query_in;
  query_in.add_to(query_cmd, false);
  EvalArgs query_args;
  query_args.add_to(query_cmd);
  std::string query_map;
  std::size_t q_sentence = 0, q_token = 0, q_top = 5;
  query_cmd->add_option("--sentence", q_sentence, "Source sentence index")->required();
  query_cmd->add_option("--token", q_token, "Token index in the sentence")->required();
  query_cmd->add_option("--top", q_top, "Number of neighbors")->check(CLI::PositiveNumber);
  query_cmd->add_option("--map", query_map, "Rotation or mapper to apply first");

  // report ------------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Summarize a run directory");
  std::string report_dir;
  bool report_verify = false;
  report_cmd->add_option("dir", report_dir, "Run output directory");
  report_cmd->add_flag("--verify", report_verify, "Check manifest checksums");

  // run ---------------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "Run the full pipeline from a JSON config");
  std::string run_config, run_out;
  std::vector<std::string> run_sets;
  std::optional<std::uint64_t> run_seed;
  run_cmd->add_option("--config", run_config, "Config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run_out, "Output directory (overrides output_dir)");
  run_cmd->add_option("--seed", run_seed, "Seed (overrides seed)");
  run_cmd->add_option("--set", run_sets, "Override a config field: section.key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (synth_cmd->parsed()) {
    sc.distortion = distortion_from_string(distortion);
    const fs::path dir = synth_out.empty() ? default_output_dir() : fs::path(synth_out);
    const SynthBundle b = generate(sc);
    write_bundle(b, sc, dir);
    std::cout << "wrote " << b.corpus.size() << " sentence pairs (" << b.corpus.pair_count()
              << " gold pairs) to " << dir.string() << "\n";
    return 0;
  }

  if (pairs_cmd->parsed()) {
    const ParallelCorpus c = load_parallel_text(ep_src, ep_tgt);
    Ibm1Model fwd;
    const ParallelCorpus out = extract_word_pairs(c, {ep_iters}, &fwd);
    const fs::path path = output_path(ep_out, "pairs.txt");
    write_pharaoh(out, path);
    if (!ep_table.empty()) fwd.table.write_tsv(ep_table);
    std::cout << "extracted " << out.pair_count() << " pairs from " << c.size()
              << " sentence pairs to " << path.string() << "\n";
    return 0;
  }

  if (align_cmd->parsed()) {
    const ParallelCorpus c = align_in.corpus();
    auto [src, tgt] = align_in.embeddings(c);
    const AlignMethod m = align_method_from_string(method);
    if (m == AlignMethod::kFinetune) {
      acfg.schedule = schedule == "linear" ? LrSchedule::kLinearDecay : LrSchedule::kConstant;
      acfg.seed = mix_seed(align_seed, "align");
      acfg.validate();
      Mapper init = Mapper::identity(mapper_kind_from_string(mapper_kind), src.dim, hidden,
                                     mix_seed(align_seed, "align/init"),
                                     language_codes ? 2 : 0);
      const TrainingCorpus tc{&c, &src, &tgt};
      const FinetuneResult r = finetune_align(std::move(init), std::span(&tc, 1), acfg);
      const fs::path path = output_path(align_out, "mapper.cmap");
      write_mapper(r.mapper, path);
      if (!trace_out.empty()) r.trace.write_csv(trace_out);
      const auto& last = r.trace.rows.empty() ? TraceRow{} : r.trace.rows.back();
      std::cout << "finetune: " << r.trace.rows.size() << " steps, final L=" << last.alignment
                << " R=" << last.anchor << ", mapper written to " << path.string() << "\n";
    } else {
      const RotationMap w = m == AlignMethod::kRotation ? word_rotation_fit(src, tgt, c)
                                                        : sentence_rotation_fit(src, tgt, c);
      const fs::path path = output_path(align_out, "rotation.crot");
      write_rotation(w, path);
      std::cout << method << ": " << w.dim() << "x" << w.dim() << " map written to "
                << path.string() << "\n";
    }
    return 0;
  }

  if (eval_cmd->parsed()) {
    const ParallelCorpus c = eval_in.corpus();
    auto [src, tgt] = eval_in.embeddings(c);
    apply_map(eval_map, src, tgt);
    const RetrievalReport r = evaluate(src, tgt, c, eval_args.options(threads));
    if (!eval_out.empty()) write_file(eval_out, r.to_json());
    if (!eval_csv.empty()) r.write_pairs_csv(eval_csv);
    std::cout << r.to_json();
    return 0;
  }

  if (pos_cmd->parsed()) {
    const RetrievalReport r = load_report_pairs_csv(pos_report);
    const PosBreakdown b = pos_breakdown(r, load_pos_tags(pos_tags));
    if (!pos_out.empty()) {
      b.write_csv(pos_out + ".csv");
      write_file(pos_out + ".json", b.to_json());
    }
    std::cout << b.to_json();
    return 0;
  }

  if (freq_cmd->parsed()) {
    const RetrievalReport r = load_report_pairs_csv(fq_report);
    const ParallelCorpus eval_c = load_parallel_corpus(fq_src, fq_tgt, fq_pairs);
    const ParallelCorpus train_c = load_parallel_text(fq_train_src, fq_train_tgt);
    const auto edges = parse_bins(fq_bins);
    const auto bins = freq_rank_curve(r, eval_c, FrequencyRanks(source_side(train_c)),
                                      FrequencyRanks(target_side(train_c)), edges);
    const fs::path path = output_path(fq_out, "freq.csv");
    write_frequency_csv(bins, path);
    std::cout << std::ifstream(path).rdbuf();
    return 0;
  }

  if (proj_cmd->parsed()) {
    const ParallelCorpus c = proj_in.corpus();
    auto [src, tgt] = proj_in.embeddings(c);
    apply_map(proj_map, src, tgt);
    const fs::path path = output_path(proj_out, "projection.csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    out << "x,y,word,language,phase\n";
    write_projection_rows(c, src, tgt, proj_phase, proj_limit, out);
    std::cout << "projection written to " << path.string() << "\n";
    return 0;
  }

  if (query_cmd->parsed()) {
    const ParallelCorpus c = query_in.corpus();
    auto [src, tgt] = query_in.embeddings(c);
    apply_map(query_map, src, tgt);
    const EvalOptions o = query_args.options(threads);
    const auto hits =
        query_neighbors({q_sentence, q_token}, src, tgt, c, o.sim, o.k, q_top, o.scoring);
    const auto& qs = c.entries[q_sentence].src;
    std::cout << "query: \"" << qs.tokens[q_token] << "\" in: " << qs.text() << "\n";
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const auto& h = hits[i];
      std::cout << std::setw(3) << i + 1 << ". " << std::fixed << std::setprecision(4) << h.score
                << "  [" << h.ref.sentence << ":" << h.ref.token << "] \"" << h.word
                << "\" in: " << h.sentence_text << "\n";
    }
    return 0;
  }

  if (report_cmd->parsed()) {
    const fs::path dir = report_dir.empty() ? default_output_dir() : fs::path(report_dir);
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("no manifest.json in " + dir.string());
    const nlohmann::json m = nlohmann::json::parse(in, nullptr, false);
    if (m.is_discarded()) throw DataError("manifest.json is not valid JSON");
    std::cout << "run: " << dir.string() << "\n"
              << "version " << m.value("version", "?") << ", seed " << m.value("seed", 0)
              << ", " << m.value("config_hash", "?") << "\n";
    for (const char* name : {"report_baseline.json", "report.json"}) {
      std::ifstream rf(dir / name);
      if (!rf) continue;
      const nlohmann::json r = nlohmann::json::parse(rf, nullptr, false);
      if (r.is_discarded()) throw DataError(std::string(name) + " is not valid JSON");
      std::cout << std::left << std::setw(22) << name << std::fixed << std::setprecision(4)
                << "src->tgt " << r["src_to_tgt"]["accuracy"].get<double>() << "  tgt->src "
                << r["tgt_to_src"]["accuracy"].get<double>() << "  mean "
                << r["bidirectional_mean"].get<double>() << "  (" << r["pairs"].get<std::size_t>()
                << " pairs, " << r["sim"].get<std::string>() << ")\n";
    }
    std::cout << "outputs:\n";
    for (const auto& f : m.at("outputs")) std::cout << "  " << f.at("path").get<std::string>() << "\n";
    if (report_verify) {
      const auto bad = verify_manifest(dir);
      for (const auto& b : bad) std::cerr << "checksum mismatch: " << b << "\n";
      if (!bad.empty()) throw DataError(std::to_string(bad.size()) + " output(s) fail verification");
      std::cout << "all checksums match\n";
    }
    return 0;
  }

  if (run_cmd->parsed()) {
    std::ifstream in(run_config);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw UsageError(run_config + ": not a JSON object");
    for (const auto& s : run_sets) apply_override(j, s);
    if (run_seed) j["seed"] = *run_seed;
    if (!run_out.empty()) j["output_dir"] = run_out;
    else if (!j.contains("output_dir")) j["output_dir"] = default_output_dir().string();
    if (app.get_option("--threads")->count() > 0) j["threads"] = threads;
    const RunConfig cfg = RunConfig::from_json(j);
    const RunResult r = run_pipeline(cfg);
    std::cout << std::fixed << std::setprecision(4) << "baseline mean accuracy "
              << r.baseline.mean_accuracy << ", aligned " << r.aligned.mean_accuracy << " ("
              << r.aligned.pair_count() << " pairs)\nmanifest: " << r.manifest.string() << "\n";
    return 0;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const Error& e) {
    std::cerr << "xalign: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "xalign: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "xalign: " << e.what() << "\n";
    return 2;
  }
}
