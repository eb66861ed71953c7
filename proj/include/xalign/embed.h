#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xalign/corpus.h"
#include "xalign/numeric/matrix.h"

namespace xalign {

// Per-token vectors for one side of a corpus. sentences[k] is a
// (token count × dim) matrix.
struct ContextualEmbeddingSet {
  std::size_t dim = 0;
  std::vector<Matrix> sentences;

  std::size_t size() const { return sentences.size(); }
  std::size_t token_count() const;
  std::span<const double> vec(std::size_t sentence, std::size_t token) const {
    return sentences[sentence].row(token);
  }

  // Throws DataError on dimension or non-finite violations.
  void validate() const;
  // Throws DataError unless sentence k has exactly as many vectors as
  // side[k] has tokens.
  void check_covers(const std::vector<const Sentence*>& side) const;

  friend bool operator==(const ContextualEmbeddingSet&, const ContextualEmbeddingSet&) = default;
};

// Sentences [begin, end) of `set`.
ContextualEmbeddingSet slice_set(const ContextualEmbeddingSet& set, std::size_t begin,
                                 std::size_t end);

std::vector<const Sentence*> source_side(const ParallelCorpus& corpus);
std::vector<const Sentence*> target_side(const ParallelCorpus& corpus);

// Little-endian binary: "CTXE", u32 version (1), u32 dim, u32 sentence count,
// then per sentence a u32 token count followed by token_count·dim float32.
ContextualEmbeddingSet load_embeddings(const std::filesystem::path& path);
void write_embeddings(const ContextualEmbeddingSet& set, const std::filesystem::path& path);

class StaticEmbeddingTable {
 public:
  StaticEmbeddingTable() = default;
  explicit StaticEmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  // Returns false (and leaves the table unchanged) if the word exists.
  bool add(const std::string& word, std::span<const double> vec);
  const std::vector<double>* find(const std::string& word) const;
  std::vector<double>& at(std::size_t i) { return vectors_[i]; }
  const std::vector<double>& at(std::size_t i) const { return vectors_[i]; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<std::vector<double>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// fastText text format: "count dim" header, then "word v1 ... v_dim" lines.
StaticEmbeddingTable load_static_vectors(const std::filesystem::path& path);

// Unit-normalizes every vector. Throws NumericError on a zero vector.
void normalize_rows(StaticEmbeddingTable& table);
// Subtracts the table mean from every vector.
void center_rows(StaticEmbeddingTable& table);
// normalize, mean-center, normalize. Needs at least two entries.
StaticEmbeddingTable normalize_center_normalize(StaticEmbeddingTable table);

// [word; mean; max; min] over the sentence's vectors, 4·dim entries.
std::vector<double> sentence_augment(std::span<const double> word_vec,
                                     const Matrix& sentence_vectors);

// Builds a per-token set from static vectors, each token's vector augmented
// with its sentence's mean/max/min. Words missing from the table get a zero
// vector.
ContextualEmbeddingSet augmented_static_set(const StaticEmbeddingTable& table,
                                            const std::vector<const Sentence*>& side,
                                            bool augment = true);

}  // namespace xalign
