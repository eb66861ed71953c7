#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xalign/corpus.h"
#include "xalign/embed.h"
#include "xalign/numeric/matrix.h"
#include "xalign/retrieval.h"

namespace xalign {

// (sentence, token) -> UPOS tag
using PosTable = std::map<TokenRef, std::string>;

bool is_upos_tag(std::string_view tag);

// TSV rows "sentence_index<TAB>token_index<TAB>TAG"; blank lines ignored.
// Tags must belong to the Universal POS tagset.
PosTable load_pos_tags(const std::filesystem::path& path);

struct TagAccuracy {
  std::string tag;
  std::size_t pairs = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct GroupAccuracy {
  std::string group;
  std::vector<std::string> members;
  std::size_t pairs = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // nullopt when no member tag is present
};

struct PosBreakdown {
  std::vector<TagAccuracy> tags;  // sorted by tag; only tags with pairs
  std::vector<GroupAccuracy> groups;

  void write_csv(const std::filesystem::path& path) const;
  std::string to_json() const;
};

inline constexpr std::string_view kUntagged = "UNTAGGED";

// Tag groups: lexical-overlap {NUM, PUNCT, PROPN}, closed {DET, ADP, CCONJ,
// SCONJ, PRON, AUX}, open {NOUN, ADV, ADJ, VERB}. PART, SYM, INTJ and X get
// their own rows but belong to no group. Group accuracy is pair-weighted.
PosBreakdown pos_breakdown(const DirectionReport& direction, const PosTable& tags);
inline PosBreakdown pos_breakdown(const RetrievalReport& report, const PosTable& tags) {
  return pos_breakdown(report.src_to_tgt, tags);
}

// Rank 1 is the most frequent type; equal counts are ordered
// lexicographically. Unknown types rank vocab_size + 1.
class FrequencyRanks {
 public:
  FrequencyRanks() = default;
  explicit FrequencyRanks(const std::vector<const Sentence*>& side);

  std::size_t rank(const std::string& word) const;
  std::size_t vocab_size() const { return ranks_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> ranks_;
};

struct FrequencyBin {
  double lower = 0.0;
  double upper = 0.0;  // exclusive; may be +inf
  std::size_t pairs = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;
};

std::vector<double> default_frequency_bin_edges();

// Bins source-to-target outcomes by |rank(tgt word) − rank(src word)|.
// Throws UsageError for unsorted edges, DataError if a difference falls
// outside [edges.front(), edges.back()).
std::vector<FrequencyBin> freq_rank_curve(const RetrievalReport& report,
                                          const ParallelCorpus& eval_corpus,
                                          const FrequencyRanks& src_ranks,
                                          const FrequencyRanks& tgt_ranks,
                                          std::span<const double> bin_edges);
void write_frequency_csv(const std::vector<FrequencyBin>& bins, const std::filesystem::path& path);

struct Projection {
  Matrix points;                   // n × out_dim
  double captured_variance = 0.0;  // variance along the kept directions
  double total_variance = 0.0;
  double explained_ratio() const {
    return total_variance > 0.0 ? captured_variance / total_variance : 0.0;
  }
};

// Projects mean-centered rows onto the top right singular vectors. Each
// direction's sign is fixed so its largest-magnitude component is positive.
Projection pca_project(const Matrix& vectors, std::size_t out_dim = 2);

// Projects the first `max_pairs` linked (source, target) vector pairs jointly
// to 2-D and writes "x,y,word,language,phase" rows (no header).
void write_projection_rows(const ParallelCorpus& corpus, const ContextualEmbeddingSet& src,
                           const ContextualEmbeddingSet& tgt, const std::string& phase,
                           std::size_t max_pairs, std::ostream& out);

double correlation(std::span<const double> xs, std::span<const double> ys);

}  // namespace xalign
