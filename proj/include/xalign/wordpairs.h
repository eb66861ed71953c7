#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xalign/corpus.h"

namespace xalign {

// IBM Model 1 lexical table p(tgt type | src type). Source id 0 is the NULL
// word. Only co-occurring type pairs are stored; everything else is zero.
class TranslationTable {
 public:
  static constexpr std::uint32_t kNullId = 0;
  static constexpr std::string_view kNullToken = "<NULL>";
  // Probability used for pairs absent from the table.
  static constexpr double kFloor = 1e-12;

  // Interns the vocabularies and sets p uniform over co-occurring types.
  static TranslationTable uniform_from(const ParallelCorpus& corpus);

  std::optional<std::uint32_t> src_id(std::string_view word) const;
  std::optional<std::uint32_t> tgt_id(std::string_view word) const;
  const std::string& src_word(std::uint32_t id) const { return src_vocab_[id]; }
  const std::string& tgt_word(std::uint32_t id) const { return tgt_vocab_[id]; }
  std::size_t src_vocab_size() const { return src_vocab_.size(); }
  std::size_t tgt_vocab_size() const { return tgt_vocab_.size(); }

  // p(tgt | src), floored for unknown or non-co-occurring pairs.
  double prob(std::uint32_t src, std::uint32_t tgt) const;
  double prob(std::string_view src_word, std::string_view tgt_word) const;
  // Stored probability without the floor; 0 for non-co-occurring pairs.
  double raw_prob(std::uint32_t src, std::uint32_t tgt) const;
  double null_prob(std::string_view tgt_word) const;

  // Row of (tgt id, probability) sorted by tgt id.
  const std::vector<std::pair<std::uint32_t, double>>& row(std::uint32_t src) const {
    return rows_[src];
  }
  std::vector<std::pair<std::uint32_t, double>>& mutable_row(std::uint32_t src) {
    return rows_[src];
  }

  // (src, tgt, probability) rows in lexicographic word order.
  void write_tsv(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> src_vocab_;
  std::vector<std::string> tgt_vocab_;
  std::unordered_map<std::string, std::uint32_t> src_index_;
  std::unordered_map<std::string, std::uint32_t> tgt_index_;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows_;
};

struct Ibm1Model {
  TranslationTable table;
  // log_likelihood[k] is the corpus log-likelihood after k EM iterations
  // (index 0 is the uniform initialization).
  std::vector<double> log_likelihood;
};

// Trains p(tgt | src) with `iterations` rounds of EM. NULL is prepended to
// every source sentence.
Ibm1Model ibm1_train(const ParallelCorpus& corpus, int iterations);

double ibm1_log_likelihood(const TranslationTable& table, const ParallelCorpus& corpus);

// links[tgt position] = linked source position, or nullopt for NULL.
struct DirectionalAlignment {
  std::vector<std::optional<std::size_t>> links;
};

// Viterbi links under Model 1. Candidates are scanned NULL first, then source
// positions in increasing order; only a strictly larger probability replaces
// the current best.
DirectionalAlignment ibm1_align(const TranslationTable& table, const Sentence& src,
                                const Sentence& tgt);

// `fwd` links target positions to source positions; `rev` links source
// positions to target positions. Keeps (i, j) iff fwd[j] = i and rev[i] = j.
WordPairSet intersect(const DirectionalAlignment& fwd, const DirectionalAlignment& rev);

struct ExtractOptions {
  int iterations = 10;
};

// Trains both directions and replaces each entry's pairs with the
// intersection of the two Viterbi alignments.
ParallelCorpus extract_word_pairs(const ParallelCorpus& corpus, const ExtractOptions& opts,
                                  Ibm1Model* fwd_model = nullptr,
                                  Ibm1Model* rev_model = nullptr);

}  // namespace xalign
