#include "xalign/retrieval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "xalign/error.h"

namespace xalign {

namespace {

// Unit-normalized copy; zero vectors stay zero so their cosine is 0.
Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double n = norm(row);
    if (n > 0.0)
      for (double& x : row) x /= n;
  }
  return out;
}

// Runs body(begin, end) over [0, n) in blocks, spread across up to `threads`
// workers. Each block writes only its own output range.
void parallel_blocks(std::size_t n, const ScoringOptions& opts,
                     const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t block = std::max<std::size_t>(1, opts.block_size);
  const std::size_t blocks = (n + block - 1) / block;
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(1, opts.threads), blocks);
  auto run = [&](std::size_t worker) {
    for (std::size_t b = worker; b < blocks; b += workers)
      body(b * block, std::min(n, (b + 1) * block));
  };
  if (workers <= 1) {
    run(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  for (auto& t : pool) t.join();
}

void check_pools(const CandidatePool& a, const CandidatePool& b) {
  if (a.size() == 0 || b.size() == 0) throw DataError("retrieval: empty pool");
  if (a.dim != b.dim)
    throw DataError("retrieval: pool dimensions differ (" + std::to_string(a.dim) + " vs " +
                    std::to_string(b.dim) + ")");
}

std::vector<double> mean_topk_unit(const Matrix& from, const Matrix& to, std::size_t k,
                                   const ScoringOptions& opts) {
  if (k == 0) throw UsageError("CSLS neighborhood size k must be >= 1");
  const std::size_t kk = std::min(k, to.rows());
  std::vector<double> out(from.rows());
  parallel_blocks(from.rows(), opts, [&](std::size_t begin, std::size_t end) {
    std::vector<double> top;
    top.reserve(kk + 1);
    for (std::size_t q = begin; q < end; ++q) {
      top.clear();
      auto x = from.row(q);
      for (std::size_t c = 0; c < to.rows(); ++c) {
        const double s = dot(x, to.row(c));
        if (top.size() < kk) {
          top.insert(std::upper_bound(top.begin(), top.end(), s, std::greater<>()), s);
        } else if (s > top.back()) {
          top.pop_back();
          top.insert(std::upper_bound(top.begin(), top.end(), s, std::greater<>()), s);
        }
      }
      double sum = 0.0;
      for (double s : top) sum += s;
      out[q] = sum / static_cast<double>(kk);
    }
  });
  return out;
}

// Best candidate for each listed query row. Penalties are empty for cosine.
std::vector<Match> best_matches(const Matrix& queries, std::span<const std::size_t> rows,
                                const Matrix& candidates, std::span<const double> query_penalty,
                                std::span<const double> cand_penalty,
                                const ScoringOptions& opts) {
  const bool csls = !query_penalty.empty();
  std::vector<Match> out(rows.size());
  parallel_blocks(rows.size(), opts, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t q = rows[i];
      auto x = queries.row(q);
      Match best{0, -std::numeric_limits<double>::infinity()};
      for (std::size_t c = 0; c < candidates.rows(); ++c) {
        const double cos = dot(x, candidates.row(c));
        const double s = csls ? 2.0 * cos - query_penalty[q] - cand_penalty[c] : cos;
        if (s > best.score) best = {c, s};
      }
      out[i] = best;
    }
  });
  return out;
}

std::map<TokenRef, std::size_t> index_of(const CandidatePool& pool) {
  std::map<TokenRef, std::size_t> idx;
  for (std::size_t i = 0; i < pool.refs.size(); ++i) idx.emplace(pool.refs[i], i);
  return idx;
}

DirectionReport run_direction(const CandidatePool& query_pool, const Matrix& query_unit,
                              const std::vector<double>& query_penalty,
                              const CandidatePool& cand_pool, const Matrix& cand_unit,
                              const std::vector<double>& cand_penalty,
                              const std::vector<std::pair<TokenRef, TokenRef>>& gold,
                              const ScoringOptions& opts) {
  const auto qidx = index_of(query_pool);
  std::vector<std::size_t> rows;
  rows.reserve(gold.size());
  for (const auto& [q, g] : gold) rows.push_back(qidx.at(q));
  const auto matches = best_matches(query_unit, rows, cand_unit, query_penalty, cand_penalty, opts);

  DirectionReport report;
  report.outcomes.reserve(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    PairOutcome o;
    o.query = gold[i].first;
    o.gold = gold[i].second;
    o.predicted = cand_pool.refs[matches[i].index];
    o.correct = o.predicted == o.gold;
    o.score = matches[i].score;
    report.correct += o.correct ? 1 : 0;
    report.outcomes.push_back(o);
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(gold.size());
  return report;
}

}  // namespace

std::string to_string(Similarity sim) { return sim == Similarity::kCsls ? "csls" : "cosine"; }

std::string to_string(RetrievalMode mode) {
  return mode == RetrievalMode::kContextual ? "contextual" : "non-contextual";
}

Similarity similarity_from_string(const std::string& name) {
  if (name == "csls") return Similarity::kCsls;
  if (name == "cosine") return Similarity::kCosine;
  throw UsageError("unknown similarity '" + name + "' (expected csls or cosine)");
}

RetrievalMode mode_from_string(const std::string& name) {
  if (name == "contextual") return RetrievalMode::kContextual;
  if (name == "non-contextual" || name == "noncontextual") return RetrievalMode::kNonContextual;
  throw UsageError("unknown retrieval mode '" + name + "'");
}

CandidatePool build_pool(const ContextualEmbeddingSet& set) {
  const std::size_t n = set.token_count();
  if (n == 0) throw DataError("build_pool: embedding set is empty");
  CandidatePool pool{set.dim, Matrix(n, set.dim), {}};
  pool.refs.reserve(n);
  std::size_t r = 0;
  for (std::size_t s = 0; s < set.size(); ++s) {
    for (std::size_t t = 0; t < set.sentences[s].rows(); ++t) {
      auto v = set.vec(s, t);
      std::copy(v.begin(), v.end(), pool.vectors.row(r++).begin());
      pool.refs.push_back({s, t});
    }
  }
  return pool;
}

CandidatePool build_pool(const ContextualEmbeddingSet& set, std::span<const TokenRef> positions) {
  if (positions.empty()) throw DataError("build_pool: no positions");
  CandidatePool pool{set.dim, Matrix(positions.size(), set.dim), {}};
  pool.refs.assign(positions.begin(), positions.end());
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const auto& p = positions[r];
    if (p.sentence >= set.size() || p.token >= set.sentences[p.sentence].rows())
      throw DataError("build_pool: position (" + std::to_string(p.sentence) + ", " +
                      std::to_string(p.token) + ") outside the embedding set");
    auto v = set.vec(p.sentence, p.token);
    std::copy(v.begin(), v.end(), pool.vectors.row(r).begin());
  }
  return pool;
}

Matrix cosine_scores(const CandidatePool& queries, const CandidatePool& candidates) {
  check_pools(queries, candidates);
  const Matrix qu = unit_rows(queries.vectors);
  const Matrix cu = unit_rows(candidates.vectors);
  Matrix out(queries.size(), candidates.size());
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (std::size_t c = 0; c < candidates.size(); ++c) out(q, c) = dot(qu.row(q), cu.row(c));
  return out;
}

std::vector<double> mean_topk_cosine(const CandidatePool& from, const CandidatePool& to,
                                     std::size_t k, const ScoringOptions& opts) {
  check_pools(from, to);
  return mean_topk_unit(unit_rows(from.vectors), unit_rows(to.vectors), k, opts);
}

Matrix csls_scores(const CandidatePool& queries, const CandidatePool& candidates, std::size_t k,
                   const ScoringOptions& opts) {
  check_pools(queries, candidates);
  const Matrix qu = unit_rows(queries.vectors);
  const Matrix cu = unit_rows(candidates.vectors);
  const auto r_t = mean_topk_unit(qu, cu, k, opts);
  const auto r_s = mean_topk_unit(cu, qu, k, opts);
  Matrix out(queries.size(), candidates.size());
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (std::size_t c = 0; c < candidates.size(); ++c)
      out(q, c) = 2.0 * dot(qu.row(q), cu.row(c)) - r_t[q] - r_s[c];
  return out;
}

std::vector<Match> retrieve(const CandidatePool& queries, const CandidatePool& candidates,
                            Similarity sim, std::size_t k, const ScoringOptions& opts) {
  check_pools(queries, candidates);
  const Matrix qu = unit_rows(queries.vectors);
  const Matrix cu = unit_rows(candidates.vectors);
  std::vector<double> r_t, r_s;
  if (sim == Similarity::kCsls) {
    r_t = mean_topk_unit(qu, cu, k, opts);
    r_s = mean_topk_unit(cu, qu, k, opts);
  }
  std::vector<std::size_t> rows(queries.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return best_matches(qu, rows, cu, r_t, r_s, opts);
}

RetrievalReport evaluate(const ContextualEmbeddingSet& src_set,
                         const ContextualEmbeddingSet& tgt_set,
                         const ParallelCorpus& eval_corpus, const EvalOptions& opts) {
  src_set.check_covers(source_side(eval_corpus));
  tgt_set.check_covers(target_side(eval_corpus));
  if (src_set.dim != tgt_set.dim) throw DataError("evaluate: embedding dimensions differ");

  const bool non_contextual = opts.mode == RetrievalMode::kNonContextual;
  ParallelCorpus deduped;
  if (non_contextual) deduped = dedupe_first_occurrence(eval_corpus);
  const ParallelCorpus& use = non_contextual ? deduped : eval_corpus;

  std::vector<std::pair<TokenRef, TokenRef>> s2t, t2s;
  for (std::size_t k = 0; k < use.size(); ++k) {
    for (const auto& p : use.entries[k].pairs) {
      s2t.push_back({{k, p.src}, {k, p.tgt}});
      t2s.push_back({{k, p.tgt}, {k, p.src}});
    }
  }
  if (s2t.empty()) throw DataError("evaluate: no word pairs to evaluate");

  CandidatePool src_pool, tgt_pool;
  if (opts.mode == RetrievalMode::kContextual) {
    src_pool = build_pool(src_set);
    tgt_pool = build_pool(tgt_set);
  } else {
    std::vector<TokenRef> src_pos, tgt_pos;
    for (const auto& [q, g] : s2t) {
      src_pos.push_back(q);
      tgt_pos.push_back(g);
    }
    std::sort(tgt_pos.begin(), tgt_pos.end());
    src_pool = build_pool(src_set, src_pos);
    tgt_pool = build_pool(tgt_set, tgt_pos);
  }

  const Matrix src_unit = unit_rows(src_pool.vectors);
  const Matrix tgt_unit = unit_rows(tgt_pool.vectors);
  std::vector<double> src_penalty, tgt_penalty;
  if (opts.sim == Similarity::kCsls) {
    src_penalty = mean_topk_unit(src_unit, tgt_unit, opts.k, opts.scoring);
    tgt_penalty = mean_topk_unit(tgt_unit, src_unit, opts.k, opts.scoring);
  }

  RetrievalReport report;
  report.sim = opts.sim;
  report.k = opts.k;
  report.mode = opts.mode;
  report.src_to_tgt = run_direction(src_pool, src_unit, src_penalty, tgt_pool, tgt_unit,
                                    tgt_penalty, s2t, opts.scoring);
  report.tgt_to_src = run_direction(tgt_pool, tgt_unit, tgt_penalty, src_pool, src_unit,
                                    src_penalty, t2s, opts.scoring);
  report.mean_accuracy = (report.src_to_tgt.accuracy + report.tgt_to_src.accuracy) / 2.0;
  return report;
}

std::string RetrievalReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = to_string(mode);
  j["sim"] = to_string(sim);
  j["k"] = k;
  j["pairs"] = pair_count();
  j["src_to_tgt"] = {{"accuracy", src_to_tgt.accuracy}, {"correct", src_to_tgt.correct}};
  j["tgt_to_src"] = {{"accuracy", tgt_to_src.accuracy}, {"correct", tgt_to_src.correct}};
  j["bidirectional_mean"] = mean_accuracy;
  return j.dump(2) + "\n";
}

void RetrievalReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json();
}

void RetrievalReport::write_pairs_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "direction,query_sent,query_tok,gold_sent,gold_tok,pred_sent,pred_tok,correct,score\n";
  auto dump = [&](const char* dir, const DirectionReport& d) {
    for (const auto& o : d.outcomes)
      out << dir << ',' << o.query.sentence << ',' << o.query.token << ',' << o.gold.sentence
          << ',' << o.gold.token << ',' << o.predicted.sentence << ',' << o.predicted.token
          << ',' << (o.correct ? 1 : 0) << ',' << o.score << '\n';
  };
  dump("src2tgt", src_to_tgt);
  dump("tgt2src", tgt_to_src);
}

RetrievalReport load_report_pairs_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  RetrievalReport report;
  std::string line;
  std::size_t line_no = 0;
  auto field_size = [&](const std::string& f) -> std::size_t {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(f, &used);
      if (used != f.size()) throw std::invalid_argument(f);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad integer '" + f + "'");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 9)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 9 columns");
    PairOutcome o;
    o.query = {field_size(f[1]), field_size(f[2])};
    o.gold = {field_size(f[3]), field_size(f[4])};
    o.predicted = {field_size(f[5]), field_size(f[6])};
    o.correct = f[7] == "1";
    o.score = std::strtod(f[8].c_str(), nullptr);
    DirectionReport* d = nullptr;
    if (f[0] == "src2tgt") d = &report.src_to_tgt;
    else if (f[0] == "tgt2src") d = &report.tgt_to_src;
    else throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown direction");
    d->correct += o.correct ? 1 : 0;
    d->outcomes.push_back(o);
  }
  for (DirectionReport* d : {&report.src_to_tgt, &report.tgt_to_src}) {
    if (!d->outcomes.empty())
      d->accuracy = static_cast<double>(d->correct) / static_cast<double>(d->outcomes.size());
  }
  report.mean_accuracy = (report.src_to_tgt.accuracy + report.tgt_to_src.accuracy) / 2.0;
  return report;
}

std::vector<Neighbor> query_neighbors(TokenRef query, const ContextualEmbeddingSet& src_set,
                                      const ContextualEmbeddingSet& tgt_set,
                                      const ParallelCorpus& corpus, Similarity sim,
                                      std::size_t k, std::size_t top_n,
                                      const ScoringOptions& opts) {
  src_set.check_covers(source_side(corpus));
  tgt_set.check_covers(target_side(corpus));
  if (query.sentence >= corpus.size() || query.token >= corpus.entries[query.sentence].src.size())
    throw DataError("query position (" + std::to_string(query.sentence) + ", " +
                    std::to_string(query.token) + ") is outside the corpus");

  const CandidatePool src_pool = build_pool(src_set);
  const CandidatePool tgt_pool = build_pool(tgt_set);
  check_pools(src_pool, tgt_pool);
  const Matrix src_unit = unit_rows(src_pool.vectors);
  const Matrix tgt_unit = unit_rows(tgt_pool.vectors);
  const std::size_t q = index_of(src_pool).at(query);

  std::vector<double> tgt_penalty;
  double query_penalty = 0.0;
  if (sim == Similarity::kCsls) {
    tgt_penalty = mean_topk_unit(tgt_unit, src_unit, k, opts);
    Matrix single(1, src_pool.dim);
    auto row = src_unit.row(q);
    std::copy(row.begin(), row.end(), single.row(0).begin());
    query_penalty = mean_topk_unit(single, tgt_unit, k, opts)[0];
  }

  std::vector<std::pair<double, std::size_t>> scored(tgt_pool.size());
  for (std::size_t c = 0; c < tgt_pool.size(); ++c) {
    const double cos = dot(src_unit.row(q), tgt_unit.row(c));
    scored[c] = {sim == Similarity::kCsls ? 2.0 * cos - query_penalty - tgt_penalty[c] : cos, c};
  }
  const std::size_t n = std::min(top_n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<Neighbor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenRef ref = tgt_pool.refs[scored[i].second];
    const auto& sent = corpus.entries[ref.sentence].tgt;
    out.push_back({ref, scored[i].first, sent.tokens[ref.token], sent.text()});
  }
  return out;
}

}  // namespace xalign
