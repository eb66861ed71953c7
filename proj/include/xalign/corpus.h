#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xalign {

struct Sentence {
  std::vector<std::string> tokens;
  std::string language;

  std::size_t size() const { return tokens.size(); }
  std::string text() const;
};

struct WordPair {
  std::size_t src = 0;
  std::size_t tgt = 0;

  friend auto operator<=>(const WordPair&, const WordPair&) = default;
};

// One-to-one links between positions of a sentence pair, kept sorted by
// (src, tgt).
class WordPairSet {
 public:
  WordPairSet() = default;
  // Throws DataError if a position repeats on either side.
  explicit WordPairSet(std::vector<WordPair> pairs);

  const std::vector<WordPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

  // Throws DataError if any index is outside the sentence lengths.
  void check_bounds(std::size_t src_len, std::size_t tgt_len) const;

  friend bool operator==(const WordPairSet&, const WordPairSet&) = default;

 private:
  std::vector<WordPair> pairs_;
};

struct CorpusEntry {
  Sentence src;
  Sentence tgt;
  WordPairSet pairs;
};

struct ParallelCorpus {
  std::string src_language;
  std::string tgt_language;
  std::vector<CorpusEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::size_t pair_count() const;
  // Swaps source and target sides, including word-pair orientation.
  ParallelCorpus reversed() const;
};

struct CorpusSplits {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus test;
};

// word index -> index of the word's final subword
using SubwordMap = std::vector<std::size_t>;

std::vector<std::string> split_tokens(std::string_view line);
// Parses one line of Pharaoh links ("0-0 1-2 ...").
WordPairSet parse_pharaoh(std::string_view line);
std::string format_pharaoh(const WordPairSet& pairs);

ParallelCorpus load_parallel_corpus(const std::filesystem::path& src_path,
                                    const std::filesystem::path& tgt_path,
                                    const std::filesystem::path& pairs_path,
                                    std::string src_language = "src",
                                    std::string tgt_language = "tgt");
// Loads text only; every entry gets an empty WordPairSet.
ParallelCorpus load_parallel_text(const std::filesystem::path& src_path,
                                  const std::filesystem::path& tgt_path,
                                  std::string src_language = "src",
                                  std::string tgt_language = "tgt");
void write_parallel_corpus(const ParallelCorpus& corpus,
                           const std::filesystem::path& src_path,
                           const std::filesystem::path& tgt_path,
                           const std::filesystem::path& pairs_path);
void write_pharaoh(const ParallelCorpus& corpus, const std::filesystem::path& path);

// Index ranges [train_begin, dev_begin), [dev_begin, test_begin),
// [test_begin, end) used by split_corpus.
struct SplitRanges {
  std::size_t train_begin = 0;
  std::size_t dev_begin = 0;
  std::size_t test_begin = 0;
  std::size_t end = 0;
};
SplitRanges compute_split_ranges(std::size_t corpus_size, std::size_t test_n, std::size_t dev_n,
                                 std::size_t train_n);

// test = last test_n entries, dev = the dev_n entries before it, train = up
// to train_n entries before dev. Each block keeps file order.
CorpusSplits split_corpus(const ParallelCorpus& corpus, std::size_t test_n,
                          std::size_t dev_n, std::size_t train_n);

// Drops evaluation links whose (src word, tgt word) type pair is linked
// anywhere in `train`, and links whose words match case-insensitively.
ParallelCorpus filter_eval_pairs(const ParallelCorpus& eval, const ParallelCorpus& train);

// Keeps a link only if neither its source type nor its target type occurs in
// an earlier kept link (entries and links scanned in order).
ParallelCorpus dedupe_first_occurrence(const ParallelCorpus& corpus);

// Subwords use a "##" prefix for continuation pieces.
SubwordMap map_subwords(const std::vector<std::string>& words,
                        const std::vector<std::string>& subwords);

std::string ascii_lower(std::string_view s);

}  // namespace xalign
