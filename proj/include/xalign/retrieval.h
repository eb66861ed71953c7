#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xalign/corpus.h"
#include "xalign/embed.h"
#include "xalign/numeric/matrix.h"

namespace xalign {

struct TokenRef {
  std::size_t sentence = 0;
  std::size_t token = 0;

  friend auto operator<=>(const TokenRef&, const TokenRef&) = default;
};

// Flat candidate list in (sentence, token) order with back-references.
struct CandidatePool {
  std::size_t dim = 0;
  Matrix vectors;
  std::vector<TokenRef> refs;

  std::size_t size() const { return refs.size(); }
};

CandidatePool build_pool(const ContextualEmbeddingSet& set);
// Pool restricted to `positions`, kept in the order given.
CandidatePool build_pool(const ContextualEmbeddingSet& set, std::span<const TokenRef> positions);

enum class Similarity { kCosine, kCsls };
enum class RetrievalMode { kContextual, kNonContextual };

std::string to_string(Similarity sim);
std::string to_string(RetrievalMode mode);
Similarity similarity_from_string(const std::string& name);
RetrievalMode mode_from_string(const std::string& name);

struct ScoringOptions {
  // Query rows scored per block; results do not depend on it.
  std::size_t block_size = 256;
  std::size_t threads = 1;
};

// cos(x, y) = ⟨x, y⟩ / (‖x‖‖y‖), 0 when either norm is 0.
Matrix cosine_scores(const CandidatePool& queries, const CandidatePool& candidates);

// Mean cosine from each vector of `from` to its k most similar vectors in
// `to` (all of `to` when it has fewer than k).
std::vector<double> mean_topk_cosine(const CandidatePool& from, const CandidatePool& to,
                                     std::size_t k, const ScoringOptions& opts = {});

// score(x, y) = 2·cos(x, y) − r_T(x) − r_S(y), with r_T over the candidates
// and r_S over the queries.
Matrix csls_scores(const CandidatePool& queries, const CandidatePool& candidates,
                   std::size_t k, const ScoringOptions& opts = {});

struct Match {
  std::size_t index = 0;  // candidate index
  double score = 0.0;
};

// Argmax over all candidates for every query; ties go to the lowest
// candidate index, i.e. the smallest (sentence, token).
std::vector<Match> retrieve(const CandidatePool& queries, const CandidatePool& candidates,
                            Similarity sim, std::size_t k, const ScoringOptions& opts = {});

struct PairOutcome {
  TokenRef query;
  TokenRef gold;
  TokenRef predicted;
  bool correct = false;
  double score = 0.0;
};

struct DirectionReport {
  std::vector<PairOutcome> outcomes;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct RetrievalReport {
  DirectionReport src_to_tgt;
  DirectionReport tgt_to_src;
  double mean_accuracy = 0.0;
  Similarity sim = Similarity::kCsls;
  std::size_t k = 10;
  RetrievalMode mode = RetrievalMode::kContextual;

  std::size_t pair_count() const { return src_to_tgt.outcomes.size(); }
  std::string to_json() const;
  void write_json(const std::filesystem::path& path) const;
  // One row per evaluated pair and direction.
  void write_pairs_csv(const std::filesystem::path& path) const;
};

// Rebuilds outcomes and accuracies from a per-pair CSV written by
// RetrievalReport::write_pairs_csv (sim/k/mode are not recorded there).
RetrievalReport load_report_pairs_csv(const std::filesystem::path& path);

struct EvalOptions {
  Similarity sim = Similarity::kCsls;
  std::size_t k = 10;
  RetrievalMode mode = RetrievalMode::kContextual;
  ScoringOptions scoring;
};

// Word retrieval in both directions. Queries are the linked positions of one
// side; candidates are every position of the other side (contextual), or
// only the positions of links surviving dedupe_first_occurrence
// (non-contextual). A prediction counts only if it hits the gold sentence and
// token exactly.
RetrievalReport evaluate(const ContextualEmbeddingSet& src_set,
                         const ContextualEmbeddingSet& tgt_set,
                         const ParallelCorpus& eval_corpus, const EvalOptions& opts);

struct Neighbor {
  TokenRef ref;
  double score = 0.0;
  std::string word;
  std::string sentence_text;
};

// Ranks every target position against one source position, best first.
std::vector<Neighbor> query_neighbors(TokenRef query, const ContextualEmbeddingSet& src_set,
                                      const ContextualEmbeddingSet& tgt_set,
                                      const ParallelCorpus& corpus, Similarity sim,
                                      std::size_t k, std::size_t top_n,
                                      const ScoringOptions& opts = {});

}  // namespace xalign
