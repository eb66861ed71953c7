#include "xalign/pipeline.h"

#include <chrono>
#include <ctime>
#include <fstream>
#include <limits>
#include <set>

#include "xalign/analysis.h"
#include "xalign/checksum.h"
#include "xalign/error.h"
#include "xalign/numeric/random.h"
#include "xalign/wordpairs.h"

namespace xalign {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(AlignMethod method) {
  switch (method) {
    case AlignMethod::kNone: return "none";
    case AlignMethod::kRotation: return "rotation";
    case AlignMethod::kSentenceRotation: return "sentence-rotation";
    case AlignMethod::kFinetune: return "finetune";
  }
  return "none";
}

AlignMethod align_method_from_string(const std::string& name) {
  if (name == "none") return AlignMethod::kNone;
  if (name == "rotation") return AlignMethod::kRotation;
  if (name == "sentence-rotation") return AlignMethod::kSentenceRotation;
  if (name == "finetune") return AlignMethod::kFinetune;
  throw UsageError("unknown align method '" + name +
                   "' (expected rotation, sentence-rotation, finetune or none)");
}

namespace {

std::string pair_source_name(PairSource s) {
  switch (s) {
    case PairSource::kGold: return "gold";
    case PairSource::kIbm1: return "ibm1";
    case PairSource::kExternal: return "external";
  }
  return "gold";
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw UsageError("config: unknown key '" + it.key() + "' in '" + where + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

std::vector<double> edges_from_json(const json& arr) {
  std::vector<double> edges;
  for (const auto& e : arr) {
    if (e.is_string() && (e == "inf" || e == "Infinity"))
      edges.push_back(std::numeric_limits<double>::infinity());
    else if (e.is_number())
      edges.push_back(e.get<double>());
    else
      throw UsageError("config: bin edges must be numbers or \"inf\"");
  }
  return edges;
}

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  } catch (const std::exception& e) {
    throw StageError(name, DataError(e.what()));
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

struct Loaded {
  ParallelCorpus corpus;
  ContextualEmbeddingSet src;
  ContextualEmbeddingSet tgt;
};

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  check_keys(j, {"seed", "output_dir", "threads", "data", "pairs", "split", "align", "eval",
                 "analysis"},
             "root");
  read(j, "seed", cfg.seed, "root");
  std::string out_dir = cfg.output_dir.string();
  read(j, "output_dir", out_dir, "root");
  cfg.output_dir = out_dir;
  read(j, "threads", cfg.threads, "root");

  if (!j.contains("data")) throw UsageError("config: missing 'data' section");
  const json& data = j.at("data");
  check_keys(data, {"synth", "paths"}, "data");
  if (data.contains("synth") == data.contains("paths"))
    throw UsageError("config: 'data' needs exactly one of 'synth' or 'paths'");
  if (data.contains("synth")) {
    const json& s = data.at("synth");
    check_keys(s, {"vocab_size", "corpus_size", "min_length", "max_length", "dim", "context_mix",
                   "distortion", "noise", "swap_prob"},
               "data.synth");
    SynthConfig sc;
    read(s, "vocab_size", sc.vocab_size, "data.synth");
    read(s, "corpus_size", sc.corpus_size, "data.synth");
    read(s, "min_length", sc.min_length, "data.synth");
    read(s, "max_length", sc.max_length, "data.synth");
    read(s, "dim", sc.dim, "data.synth");
    read(s, "context_mix", sc.context_mix, "data.synth");
    read(s, "noise", sc.noise, "data.synth");
    read(s, "swap_prob", sc.swap_prob, "data.synth");
    std::string distortion = to_string(sc.distortion);
    read(s, "distortion", distortion, "data.synth");
    sc.distortion = distortion_from_string(distortion);
    sc.seed = cfg.seed;
    sc.validate();
    cfg.synth = sc;
  } else {
    const json& p = data.at("paths");
    check_keys(p, {"src_text", "tgt_text", "src_embeddings", "tgt_embeddings", "src_language",
                   "tgt_language"},
               "data.paths");
    DataPaths dp;
    std::string s;
    for (auto [key, dst] : {std::pair{"src_text", &dp.src_text}, {"tgt_text", &dp.tgt_text},
                            {"src_embeddings", &dp.src_embeddings},
                            {"tgt_embeddings", &dp.tgt_embeddings}}) {
      if (!p.contains(key)) throw UsageError(std::string("config: missing data.paths.") + key);
      read(p, key, s, "data.paths");
      *dst = s;
    }
    read(p, "src_language", dp.src_language, "data.paths");
    read(p, "tgt_language", dp.tgt_language, "data.paths");
    cfg.paths = dp;
  }

  if (j.contains("pairs")) {
    const json& p = j.at("pairs");
    check_keys(p, {"source", "iterations", "path"}, "pairs");
    std::string source = "gold";
    read(p, "source", source, "pairs");
    if (source == "gold") cfg.pair_source = PairSource::kGold;
    else if (source == "ibm1") cfg.pair_source = PairSource::kIbm1;
    else if (source == "external") cfg.pair_source = PairSource::kExternal;
    else throw UsageError("config: pairs.source must be gold, ibm1 or external");
    read(p, "iterations", cfg.ibm1_iterations, "pairs");
    std::string path;
    read(p, "path", path, "pairs");
    cfg.pairs_path = path;
  } else if (cfg.paths) {
    cfg.pair_source = PairSource::kIbm1;
  }
  if (cfg.pair_source == PairSource::kGold && !cfg.synth)
    throw UsageError("config: gold pairs exist only for synthetic data");
  if (cfg.pair_source == PairSource::kExternal && cfg.pairs_path.empty())
    throw UsageError("config: pairs.path is required for external pairs");
  if (cfg.ibm1_iterations < 1) throw UsageError("config: pairs.iterations must be >= 1");

  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"test", "dev", "train", "filter_eval"}, "split");
    read(s, "test", cfg.test_n, "split");
    read(s, "dev", cfg.dev_n, "split");
    read(s, "train", cfg.train_n, "split");
    read(s, "filter_eval", cfg.filter_eval, "split");
  }

  if (j.contains("align")) {
    const json& a = j.at("align");
    check_keys(a, {"method", "mapper", "hidden_dim", "language_codes", "lambda", "lr", "beta1",
                   "beta2", "epsilon", "warmup", "epochs", "batch_per_language", "schedule"},
               "align");
    std::string method = to_string(cfg.method);
    read(a, "method", method, "align");
    cfg.method = align_method_from_string(method);
    std::string kind = to_string(cfg.mapper_kind);
    read(a, "mapper", kind, "align");
    cfg.mapper_kind = mapper_kind_from_string(kind);
    read(a, "hidden_dim", cfg.hidden_dim, "align");
    read(a, "language_codes", cfg.language_codes, "align");
    if (cfg.language_codes && cfg.mapper_kind != MapperKind::kResidualMlp)
      throw UsageError("config: align.language_codes requires the residual-mlp mapper");
    read(a, "lambda", cfg.align.lambda, "align");
    read(a, "lr", cfg.align.base_lr, "align");
    read(a, "beta1", cfg.align.beta1, "align");
    read(a, "beta2", cfg.align.beta2, "align");
    read(a, "epsilon", cfg.align.epsilon, "align");
    read(a, "warmup", cfg.align.warmup_fraction, "align");
    read(a, "epochs", cfg.align.epochs, "align");
    read(a, "batch_per_language", cfg.align.pairs_per_language, "align");
    std::string schedule = "constant";
    read(a, "schedule", schedule, "align");
    if (schedule == "constant") cfg.align.schedule = LrSchedule::kConstant;
    else if (schedule == "linear") cfg.align.schedule = LrSchedule::kLinearDecay;
    else throw UsageError("config: align.schedule must be constant or linear");
  }
  cfg.align.seed = mix_seed(cfg.seed, "align");
  cfg.align.validate();

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"sim", "k", "mode", "pairs_csv"}, "eval");
    std::string sim = to_string(cfg.eval.sim), mode = to_string(cfg.eval.mode);
    read(e, "sim", sim, "eval");
    read(e, "mode", mode, "eval");
    cfg.eval.sim = similarity_from_string(sim);
    cfg.eval.mode = mode_from_string(mode);
    read(e, "k", cfg.eval.k, "eval");
    read(e, "pairs_csv", cfg.eval_pairs_csv, "eval");
    if (cfg.eval.k == 0) throw UsageError("config: eval.k must be >= 1");
  }
  cfg.eval.scoring.threads = cfg.threads;

  cfg.bin_edges = default_frequency_bin_edges();
  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    check_keys(a, {"pos", "bins", "projection_pairs"}, "analysis");
    if (a.contains("pos") && !a.at("pos").is_null()) cfg.pos_tags = a.at("pos").get<std::string>();
    if (a.contains("bins")) cfg.bin_edges = edges_from_json(a.at("bins"));
    read(a, "projection_pairs", cfg.projection_pairs, "analysis");
  }
  return cfg;
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["threads"] = threads;
  if (synth) {
    j["data"]["synth"] = {{"vocab_size", synth->vocab_size},
                          {"corpus_size", synth->corpus_size},
                          {"min_length", synth->min_length},
                          {"max_length", synth->max_length},
                          {"dim", synth->dim},
                          {"context_mix", synth->context_mix},
                          {"distortion", to_string(synth->distortion)},
                          {"noise", synth->noise},
                          {"swap_prob", synth->swap_prob}};
  } else if (paths) {
    j["data"]["paths"] = {{"src_text", paths->src_text.string()},
                          {"tgt_text", paths->tgt_text.string()},
                          {"src_embeddings", paths->src_embeddings.string()},
                          {"tgt_embeddings", paths->tgt_embeddings.string()},
                          {"src_language", paths->src_language},
                          {"tgt_language", paths->tgt_language}};
  }
  j["pairs"] = {{"source", pair_source_name(pair_source)},
                {"iterations", ibm1_iterations},
                {"path", pairs_path.string()}};
  j["split"] = {{"test", test_n}, {"dev", dev_n}, {"train", train_n}, {"filter_eval", filter_eval}};
  j["align"] = {{"method", to_string(method)},
                {"mapper", to_string(mapper_kind)},
                {"hidden_dim", hidden_dim},
                {"language_codes", language_codes},
                {"lambda", align.lambda},
                {"lr", align.base_lr},
                {"beta1", align.beta1},
                {"beta2", align.beta2},
                {"epsilon", align.epsilon},
                {"warmup", align.warmup_fraction},
                {"epochs", align.epochs},
                {"batch_per_language", align.pairs_per_language},
                {"schedule", align.schedule == LrSchedule::kConstant ? "constant" : "linear"}};
  j["eval"] = {{"sim", to_string(eval.sim)},
               {"k", eval.k},
               {"mode", to_string(eval.mode)},
               {"pairs_csv", eval_pairs_csv}};
  ordered_json bins = ordered_json::array();
  for (double e : bin_edges) {
    if (std::isinf(e)) bins.push_back("inf");
    else bins.push_back(e);
  }
  j["analysis"] = {{"pos", pos_tags ? ordered_json(pos_tags->string()) : ordered_json(nullptr)},
                   {"bins", bins},
                   {"projection_pairs", projection_pairs}};
  return j;
}

RunResult run_pipeline(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir;
  stage("setup", [&] {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  });
  std::vector<std::string> outputs;

  Loaded data = stage("data", [&] {
    if (cfg.synth) {
      SynthBundle bundle = generate(*cfg.synth);
      write_bundle(bundle, *cfg.synth, out / "data");
      for (const char* f : {"data/src.txt", "data/tgt.txt", "data/pairs.txt", "data/src.ctxe",
                            "data/tgt.ctxe", "data/gold_map.crot", "data/gold_map.json"})
        outputs.emplace_back(f);
      return Loaded{std::move(bundle.corpus), std::move(bundle.src_set), std::move(bundle.tgt_set)};
    }
    const DataPaths& p = *cfg.paths;
    Loaded l{load_parallel_text(p.src_text, p.tgt_text, p.src_language, p.tgt_language),
             load_embeddings(p.src_embeddings), load_embeddings(p.tgt_embeddings)};
    l.src.check_covers(source_side(l.corpus));
    l.tgt.check_covers(target_side(l.corpus));
    return l;
  });

  stage("pairs", [&] {
    switch (cfg.pair_source) {
      case PairSource::kGold:
        return;
      case PairSource::kExternal: {
        const ParallelCorpus with_pairs =
            load_parallel_corpus(cfg.paths ? cfg.paths->src_text : out / "data/src.txt",
                                 cfg.paths ? cfg.paths->tgt_text : out / "data/tgt.txt",
                                 cfg.pairs_path, data.corpus.src_language,
                                 data.corpus.tgt_language);
        data.corpus = with_pairs;
        return;
      }
      case PairSource::kIbm1: {
        Ibm1Model fwd, rev;
        data.corpus = extract_word_pairs(data.corpus, {cfg.ibm1_iterations}, &fwd, &rev);
        write_pharaoh(data.corpus, out / "pairs.txt");
        fwd.table.write_tsv(out / "ibm1_fwd.tsv");
        outputs.emplace_back("pairs.txt");
        outputs.emplace_back("ibm1_fwd.tsv");
        return;
      }
    }
  });

  struct Split {
    ParallelCorpus train, dev, test;
    ContextualEmbeddingSet train_src, train_tgt, test_src, test_tgt;
    std::size_t test_offset = 0;
  };
  Split split = stage("split", [&] {
    const SplitRanges r =
        compute_split_ranges(data.corpus.size(), cfg.test_n, cfg.dev_n, cfg.train_n);
    CorpusSplits cs = split_corpus(data.corpus, cfg.test_n, cfg.dev_n, cfg.train_n);
    Split s;
    s.train = std::move(cs.train);
    s.dev = std::move(cs.dev);
    s.test = std::move(cs.test);
    if (cfg.filter_eval) {
      s.dev = filter_eval_pairs(s.dev, s.train);
      s.test = filter_eval_pairs(s.test, s.train);
    }
    s.train_src = slice_set(data.src, r.train_begin, r.dev_begin);
    s.train_tgt = slice_set(data.tgt, r.train_begin, r.dev_begin);
    s.test_src = slice_set(data.src, r.test_begin, r.end);
    s.test_tgt = slice_set(data.tgt, r.test_begin, r.end);
    s.test_offset = r.test_begin;
    write_pharaoh(s.test, out / "test_pairs.txt");
    outputs.emplace_back("test_pairs.txt");
    return s;
  });

  ContextualEmbeddingSet aligned_src = split.test_src, aligned_tgt = split.test_tgt;
  stage("align", [&] {
    switch (cfg.method) {
      case AlignMethod::kNone:
        return;
      case AlignMethod::kRotation:
      case AlignMethod::kSentenceRotation: {
        const RotationMap w =
            cfg.method == AlignMethod::kRotation
                ? word_rotation_fit(split.train_src, split.train_tgt, split.train)
                : sentence_rotation_fit(split.train_src, split.train_tgt, split.train);
        write_rotation(w, out / "rotation.crot");
        outputs.emplace_back("rotation.crot");
        aligned_src = rotation_apply(w, split.test_src);
        return;
      }
      case AlignMethod::kFinetune: {
        Mapper init = Mapper::identity(cfg.mapper_kind, data.src.dim, cfg.hidden_dim,
                                       mix_seed(cfg.seed, "align/init"),
                                       cfg.language_codes ? 2 : 0);
        const TrainingCorpus tc{&split.train, &split.train_src, &split.train_tgt};
        FinetuneResult res = finetune_align(std::move(init), std::span(&tc, 1), cfg.align);
        write_mapper(res.mapper, out / "mapper.cmap");
        res.trace.write_csv(out / "trace.csv");
        outputs.emplace_back("mapper.cmap");
        outputs.emplace_back("trace.csv");
        aligned_src = res.mapper.apply(split.test_src, res.mapper.languages() > 0 ? 1 : 0);
        aligned_tgt = res.mapper.apply(split.test_tgt, 0);
        return;
      }
    }
  });

  RunResult result;
  stage("eval", [&] {
    result.baseline = evaluate(split.test_src, split.test_tgt, split.test, cfg.eval);
    result.aligned = evaluate(aligned_src, aligned_tgt, split.test, cfg.eval);
    result.baseline.write_json(out / "report_baseline.json");
    result.aligned.write_json(out / "report.json");
    outputs.emplace_back("report_baseline.json");
    outputs.emplace_back("report.json");
    if (cfg.eval_pairs_csv) {
      result.aligned.write_pairs_csv(out / "report_pairs.csv");
      outputs.emplace_back("report_pairs.csv");
    }
  });

  stage("analysis", [&] {
    const FrequencyRanks src_ranks(source_side(split.train));
    const FrequencyRanks tgt_ranks(target_side(split.train));
    for (auto [name, report] : {std::pair{"baseline", &result.baseline},
                                std::pair{"aligned", &result.aligned}}) {
      const auto bins = freq_rank_curve(*report, split.test, src_ranks, tgt_ranks, cfg.bin_edges);
      const std::string file = std::string("freq_") + name + ".csv";
      write_frequency_csv(bins, out / file);
      outputs.push_back(file);
    }
    if (cfg.pos_tags) {
      const PosTable full = load_pos_tags(*cfg.pos_tags);
      PosTable local;
      for (const auto& [ref, tag] : full)
        if (ref.sentence >= split.test_offset)
          local[{ref.sentence - split.test_offset, ref.token}] = tag;
      for (auto [name, report] : {std::pair{"baseline", &result.baseline},
                                  std::pair{"aligned", &result.aligned}}) {
        const PosBreakdown pos = pos_breakdown(*report, local);
        const std::string stem = std::string("pos_") + name;
        pos.write_csv(out / (stem + ".csv"));
        write_text(out / (stem + ".json"), pos.to_json());
        outputs.push_back(stem + ".csv");
        outputs.push_back(stem + ".json");
      }
    }
    if (cfg.projection_pairs > 0) {
      std::ofstream proj(out / "projection.csv", std::ios::binary);
      if (!proj) throw DataError("cannot write projection.csv");
      proj.precision(17);
      proj << "x,y,word,language,phase\n";
      write_projection_rows(split.test, split.test_src, split.test_tgt, "pre", cfg.projection_pairs,
                       proj);
      write_projection_rows(split.test, aligned_src, aligned_tgt, "post", cfg.projection_pairs, proj);
      outputs.emplace_back("projection.csv");
    }
  });

  stage("manifest", [&] {
    ordered_json m;
    // Where the outputs live does not affect them.
    ordered_json recorded = cfg.to_json();
    recorded.erase("output_dir");
    const std::string config_text = recorded.dump();
    m["tool"] = "xalign";
    m["version"] = kToolVersion;
    m["seed"] = cfg.seed;
    m["config_hash"] = "fnv1a64:" + hex64(fnv1a64(config_text));
    m["config"] = recorded;
    m["created_at"] = utc_timestamp();
    ordered_json files = ordered_json::array();
    for (const auto& f : outputs)
      files.push_back({{"path", f}, {"fnv1a64", file_checksum(out / f)}});
    m["outputs"] = files;
    write_text(out / "manifest.json", m.dump(2) + "\n");
  });
  result.manifest = out / "manifest.json";
  return result;
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw DataError("cannot open " + (dir / "manifest.json").string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  std::vector<std::string> bad;
  for (const auto& f : m.at("outputs")) {
    const std::string path = f.at("path").get<std::string>();
    const fs::path full = dir / path;
    if (!fs::exists(full) || file_checksum(full) != f.at("fnv1a64").get<std::string>())
      bad.push_back(path);
  }
  return bad;
}

}  // namespace xalign
