#include "xalign/corpus.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <unordered_set>
#include <utility>

#include "xalign/error.h"

namespace xalign {

namespace fs = std::filesystem;

std::string Sentence::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

WordPairSet::WordPairSet(std::vector<WordPair> pairs) : pairs_(std::move(pairs)) {
  std::sort(pairs_.begin(), pairs_.end());
  std::set<std::size_t> seen_src, seen_tgt;
  for (const auto& p : pairs_) {
    if (!seen_src.insert(p.src).second)
      throw DataError("word pairs are not one-to-one: source position " +
                      std::to_string(p.src) + " repeats");
    if (!seen_tgt.insert(p.tgt).second)
      throw DataError("word pairs are not one-to-one: target position " +
                      std::to_string(p.tgt) + " repeats");
  }
}

void WordPairSet::check_bounds(std::size_t src_len, std::size_t tgt_len) const {
  for (const auto& p : pairs_) {
    if (p.src >= src_len)
      throw DataError("src index " + std::to_string(p.src) + " out of range (length " +
                      std::to_string(src_len) + ")");
    if (p.tgt >= tgt_len)
      throw DataError("tgt index " + std::to_string(p.tgt) + " out of range (length " +
                      std::to_string(tgt_len) + ")");
  }
}

std::size_t ParallelCorpus::pair_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.pairs.size();
  return n;
}

ParallelCorpus ParallelCorpus::reversed() const {
  ParallelCorpus out{tgt_language, src_language, {}};
  out.entries.reserve(entries.size());
  for (const auto& e : entries) {
    std::vector<WordPair> flipped;
    flipped.reserve(e.pairs.size());
    for (const auto& p : e.pairs) flipped.push_back({p.tgt, p.src});
    out.entries.push_back({e.tgt, e.src, WordPairSet(std::move(flipped))});
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) tokens.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

namespace {

std::size_t parse_index(std::string_view s, std::string_view link) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("malformed Pharaoh link '" + std::string(link) + "'");
  return value;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

Sentence make_sentence(std::string_view line, const std::string& language,
                       std::size_t line_no, const fs::path& path) {
  Sentence s{split_tokens(line), language};
  if (s.tokens.empty())
    throw DataError(path.string() + ":" + std::to_string(line_no + 1) + ": empty sentence");
  return s;
}

}  // namespace

WordPairSet parse_pharaoh(std::string_view line) {
  std::vector<WordPair> pairs;
  for (const auto& link : split_tokens(line)) {
    const auto dash = link.find('-');
    if (dash == std::string::npos) throw DataError("malformed Pharaoh link '" + link + "'");
    std::string_view view(link);
    pairs.push_back({parse_index(view.substr(0, dash), link),
                     parse_index(view.substr(dash + 1), link)});
  }
  return WordPairSet(std::move(pairs));
}

std::string format_pharaoh(const WordPairSet& pairs) {
  std::string out;
  bool first = true;
  for (const auto& p : pairs) {
    if (!first) out += ' ';
    first = false;
    out += std::to_string(p.src);
    out += '-';
    out += std::to_string(p.tgt);
  }
  return out;
}

ParallelCorpus load_parallel_text(const fs::path& src_path, const fs::path& tgt_path,
                                  std::string src_language, std::string tgt_language) {
  const auto src_lines = read_lines(src_path);
  const auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("line-count mismatch: " + src_path.string() + " has " +
                    std::to_string(src_lines.size()) + ", " + tgt_path.string() + " has " +
                    std::to_string(tgt_lines.size()));
  if (src_lines.empty()) throw DataError("empty corpus: " + src_path.string());

  ParallelCorpus corpus{std::move(src_language), std::move(tgt_language), {}};
  corpus.entries.reserve(src_lines.size());
  for (std::size_t k = 0; k < src_lines.size(); ++k) {
    corpus.entries.push_back({make_sentence(src_lines[k], corpus.src_language, k, src_path),
                              make_sentence(tgt_lines[k], corpus.tgt_language, k, tgt_path),
                              {}});
  }
  return corpus;
}

ParallelCorpus load_parallel_corpus(const fs::path& src_path, const fs::path& tgt_path,
                                    const fs::path& pairs_path, std::string src_language,
                                    std::string tgt_language) {
  ParallelCorpus corpus = load_parallel_text(src_path, tgt_path, std::move(src_language),
                                             std::move(tgt_language));
  const auto pair_lines = read_lines(pairs_path);
  if (pair_lines.size() != corpus.size())
    throw DataError("line-count mismatch: " + pairs_path.string() + " has " +
                    std::to_string(pair_lines.size()) + " lines, corpus has " +
                    std::to_string(corpus.size()));
  for (std::size_t k = 0; k < pair_lines.size(); ++k) {
    auto& entry = corpus.entries[k];
    try {
      entry.pairs = parse_pharaoh(pair_lines[k]);
      entry.pairs.check_bounds(entry.src.size(), entry.tgt.size());
    } catch (const DataError& e) {
      throw DataError(pairs_path.string() + ":" + std::to_string(k + 1) + ": " + e.what());
    }
  }
  return corpus;
}

void write_pharaoh(const ParallelCorpus& corpus, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& e : corpus.entries) out << format_pharaoh(e.pairs) << '\n';
}

void write_parallel_corpus(const ParallelCorpus& corpus, const fs::path& src_path,
                           const fs::path& tgt_path, const fs::path& pairs_path) {
  auto src = open_output(src_path);
  auto tgt = open_output(tgt_path);
  for (const auto& e : corpus.entries) {
    src << e.src.text() << '\n';
    tgt << e.tgt.text() << '\n';
  }
  write_pharaoh(corpus, pairs_path);
}

SplitRanges compute_split_ranges(std::size_t n, std::size_t test_n, std::size_t dev_n,
                                 std::size_t train_n) {
  if (n < test_n + dev_n)
    throw DataError("split_corpus: corpus has " + std::to_string(n) +
                    " entries, need at least " + std::to_string(test_n + dev_n));
  SplitRanges r;
  r.end = n;
  r.test_begin = n - test_n;
  r.dev_begin = r.test_begin - dev_n;
  r.train_begin = r.dev_begin - std::min(train_n, r.dev_begin);
  return r;
}

CorpusSplits split_corpus(const ParallelCorpus& corpus, std::size_t test_n,
                          std::size_t dev_n, std::size_t train_n) {
  const SplitRanges r = compute_split_ranges(corpus.size(), test_n, dev_n, train_n);
  auto slice = [&](std::size_t begin, std::size_t end) {
    ParallelCorpus out{corpus.src_language, corpus.tgt_language, {}};
    out.entries.assign(corpus.entries.begin() + static_cast<std::ptrdiff_t>(begin),
                       corpus.entries.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  };
  return {slice(r.train_begin, r.dev_begin), slice(r.dev_begin, r.test_begin),
          slice(r.test_begin, r.end)};
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

ParallelCorpus filter_eval_pairs(const ParallelCorpus& eval, const ParallelCorpus& train) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : train.entries)
    for (const auto& p : e.pairs) seen.emplace(e.src.tokens[p.src], e.tgt.tokens[p.tgt]);

  ParallelCorpus out{eval.src_language, eval.tgt_language, {}};
  out.entries.reserve(eval.size());
  for (const auto& e : eval.entries) {
    std::vector<WordPair> kept;
    for (const auto& p : e.pairs) {
      const auto& sw = e.src.tokens[p.src];
      const auto& tw = e.tgt.tokens[p.tgt];
      if (seen.count({sw, tw})) continue;
      if (ascii_lower(sw) == ascii_lower(tw)) continue;
      kept.push_back(p);
    }
    out.entries.push_back({e.src, e.tgt, WordPairSet(std::move(kept))});
  }
  return out;
}

ParallelCorpus dedupe_first_occurrence(const ParallelCorpus& corpus) {
  std::unordered_set<std::string> src_types, tgt_types;
  ParallelCorpus out{corpus.src_language, corpus.tgt_language, {}};
  out.entries.reserve(corpus.size());
  for (const auto& e : corpus.entries) {
    std::vector<WordPair> kept;
    for (const auto& p : e.pairs) {
      const auto& sw = e.src.tokens[p.src];
      const auto& tw = e.tgt.tokens[p.tgt];
      if (src_types.count(sw) || tgt_types.count(tw)) continue;
      src_types.insert(sw);
      tgt_types.insert(tw);
      kept.push_back(p);
    }
    out.entries.push_back({e.src, e.tgt, WordPairSet(std::move(kept))});
  }
  return out;
}

SubwordMap map_subwords(const std::vector<std::string>& words,
                        const std::vector<std::string>& subwords) {
  static constexpr std::string_view kMarker = "##";
  SubwordMap map;
  map.reserve(words.size());
  std::size_t next = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::string built;
    bool started = false;
    while (built.size() < words[w].size()) {
      if (next >= subwords.size())
        throw DataError("subwords end before word '" + words[w] + "' is complete");
      std::string_view piece = subwords[next];
      const bool continuation = piece.starts_with(kMarker);
      if (continuation) piece.remove_prefix(kMarker.size());
      if (started != continuation)
        throw DataError("subword '" + subwords[next] + "' does not fit word '" + words[w] + "'");
      built += piece;
      started = true;
      ++next;
    }
    if (built != words[w])
      throw DataError("subwords compose '" + built + "', expected '" + words[w] + "'");
    map.push_back(next - 1);
  }
  if (next != subwords.size()) throw DataError("trailing subwords after the last word");
  return map;
}

}  // namespace xalign
