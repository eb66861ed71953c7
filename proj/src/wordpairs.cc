#include "xalign/wordpairs.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include "xalign/error.h"

namespace xalign {

namespace {

std::uint32_t intern(std::string_view word, std::vector<std::string>& vocab,
                     std::unordered_map<std::string, std::uint32_t>& index) {
  auto [it, inserted] =
      index.try_emplace(std::string(word), static_cast<std::uint32_t>(vocab.size()));
  if (inserted) vocab.emplace_back(word);
  return it->second;
}

// Position in a sorted row, or nullptr when the pair does not co-occur.
const double* find_in_row(const std::vector<std::pair<std::uint32_t, double>>& row,
                          std::uint32_t tgt) {
  auto it = std::lower_bound(row.begin(), row.end(), tgt,
                             [](const auto& e, std::uint32_t t) { return e.first < t; });
  if (it == row.end() || it->first != tgt) return nullptr;
  return &it->second;
}

struct EncodedPair {
  std::vector<std::uint32_t> src;  // starts with NULL
  std::vector<std::uint32_t> tgt;
};

std::vector<EncodedPair> encode(const TranslationTable& table, const ParallelCorpus& corpus) {
  std::vector<EncodedPair> out;
  out.reserve(corpus.size());
  for (const auto& e : corpus.entries) {
    EncodedPair p;
    p.src.push_back(TranslationTable::kNullId);
    for (const auto& w : e.src.tokens) p.src.push_back(*table.src_id(w));
    for (const auto& w : e.tgt.tokens) p.tgt.push_back(*table.tgt_id(w));
    out.push_back(std::move(p));
  }
  return out;
}

double log_likelihood(const TranslationTable& table, const std::vector<EncodedPair>& data) {
  double ll = 0.0;
  for (const auto& p : data) {
    const double norm = std::log(static_cast<double>(p.src.size()));
    for (std::uint32_t t : p.tgt) {
      double total = 0.0;
      for (std::uint32_t s : p.src) total += table.raw_prob(s, t);
      ll += std::log(total) - norm;
    }
  }
  return ll;
}

}  // namespace

TranslationTable TranslationTable::uniform_from(const ParallelCorpus& corpus) {
  TranslationTable t;
  intern(kNullToken, t.src_vocab_, t.src_index_);
  std::vector<std::set<std::uint32_t>> cooc(1);
  for (const auto& e : corpus.entries) {
    std::vector<std::uint32_t> tgt_ids;
    tgt_ids.reserve(e.tgt.size());
    for (const auto& w : e.tgt.tokens) tgt_ids.push_back(intern(w, t.tgt_vocab_, t.tgt_index_));
    std::vector<std::uint32_t> src_ids{kNullId};
    for (const auto& w : e.src.tokens) src_ids.push_back(intern(w, t.src_vocab_, t.src_index_));
    if (cooc.size() < t.src_vocab_.size()) cooc.resize(t.src_vocab_.size());
    for (std::uint32_t s : src_ids) cooc[s].insert(tgt_ids.begin(), tgt_ids.end());
  }
  t.rows_.resize(t.src_vocab_.size());
  for (std::size_t s = 0; s < cooc.size(); ++s) {
    const double p = 1.0 / static_cast<double>(cooc[s].size());
    t.rows_[s].reserve(cooc[s].size());
    for (std::uint32_t tgt : cooc[s]) t.rows_[s].emplace_back(tgt, p);
  }
  return t;
}

std::optional<std::uint32_t> TranslationTable::src_id(std::string_view word) const {
  auto it = src_index_.find(std::string(word));
  if (it == src_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> TranslationTable::tgt_id(std::string_view word) const {
  auto it = tgt_index_.find(std::string(word));
  if (it == tgt_index_.end()) return std::nullopt;
  return it->second;
}

double TranslationTable::prob(std::uint32_t src, std::uint32_t tgt) const {
  if (src >= rows_.size()) return kFloor;
  const double* p = find_in_row(rows_[src], tgt);
  return p ? std::max(*p, kFloor) : kFloor;
}

double TranslationTable::raw_prob(std::uint32_t src, std::uint32_t tgt) const {
  if (src >= rows_.size()) return 0.0;
  const double* p = find_in_row(rows_[src], tgt);
  return p ? *p : 0.0;
}

double TranslationTable::prob(std::string_view src_word, std::string_view tgt_word) const {
  auto s = src_id(src_word);
  auto t = tgt_id(tgt_word);
  if (!s || !t) return kFloor;
  return prob(*s, *t);
}

double TranslationTable::null_prob(std::string_view tgt_word) const {
  auto t = tgt_id(tgt_word);
  return t ? prob(kNullId, *t) : kFloor;
}

void TranslationTable::write_tsv(const std::filesystem::path& path) const {
  std::vector<std::tuple<const std::string*, const std::string*, double>> rows;
  for (std::size_t s = 0; s < rows_.size(); ++s)
    for (const auto& [t, p] : rows_[s]) rows.emplace_back(&src_vocab_[s], &tgt_vocab_[t], p);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (*std::get<0>(a) != *std::get<0>(b)) return *std::get<0>(a) < *std::get<0>(b);
    return *std::get<1>(a) < *std::get<1>(b);
  });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  for (const auto& [s, t, p] : rows) out << *s << '\t' << *t << '\t' << p << '\n';
}

double ibm1_log_likelihood(const TranslationTable& table, const ParallelCorpus& corpus) {
  double ll = 0.0;
  for (const auto& e : corpus.entries) {
    const double norm = std::log(static_cast<double>(e.src.size() + 1));
    for (const auto& tw : e.tgt.tokens) {
      double total = table.null_prob(tw);
      for (const auto& sw : e.src.tokens) total += table.prob(sw, tw);
      ll += std::log(total) - norm;
    }
  }
  return ll;
}

Ibm1Model ibm1_train(const ParallelCorpus& corpus, int iterations) {
  if (iterations < 1) throw UsageError("ibm1_train: iterations must be >= 1");
  if (corpus.empty()) throw DataError("ibm1_train: empty corpus");

  Ibm1Model model{TranslationTable::uniform_from(corpus), {}};
  TranslationTable& table = model.table;
  const auto data = encode(table, corpus);
  model.log_likelihood.push_back(log_likelihood(table, data));

  // Expected counts share the table's sparsity pattern.
  std::vector<std::vector<double>> counts(table.src_vocab_size());
  std::vector<double> link_probs;
  for (int it = 0; it < iterations; ++it) {
    for (std::uint32_t s = 0; s < counts.size(); ++s) counts[s].assign(table.row(s).size(), 0.0);

    for (const auto& p : data) {
      for (std::uint32_t t : p.tgt) {
        link_probs.resize(p.src.size());
        double total = 0.0;
        for (std::size_t i = 0; i < p.src.size(); ++i) {
          link_probs[i] = table.raw_prob(p.src[i], t);
          total += link_probs[i];
        }
        if (total <= 0.0) continue;
        for (std::size_t i = 0; i < p.src.size(); ++i) {
          const auto& row = table.row(p.src[i]);
          auto pos = std::lower_bound(row.begin(), row.end(), t,
                                      [](const auto& e, std::uint32_t x) { return e.first < x; });
          counts[p.src[i]][static_cast<std::size_t>(pos - row.begin())] += link_probs[i] / total;
        }
      }
    }

    for (std::uint32_t s = 0; s < counts.size(); ++s) {
      double total = 0.0;
      for (double c : counts[s]) total += c;
      auto& row = table.mutable_row(s);
      if (total <= 0.0) continue;
      for (std::size_t k = 0; k < row.size(); ++k) row[k].second = counts[s][k] / total;
    }
    model.log_likelihood.push_back(log_likelihood(table, data));
  }
  return model;
}

DirectionalAlignment ibm1_align(const TranslationTable& table, const Sentence& src,
                                const Sentence& tgt) {
  std::vector<std::optional<std::uint32_t>> src_ids;
  src_ids.reserve(src.size());
  for (const auto& w : src.tokens) src_ids.push_back(table.src_id(w));

  DirectionalAlignment out;
  out.links.reserve(tgt.size());
  for (const auto& tw : tgt.tokens) {
    const auto t = table.tgt_id(tw);
    double best = t ? table.prob(TranslationTable::kNullId, *t) : TranslationTable::kFloor;
    std::optional<std::size_t> link;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double p = (t && src_ids[i]) ? table.prob(*src_ids[i], *t) : TranslationTable::kFloor;
      if (p > best) {
        best = p;
        link = i;
      }
    }
    out.links.push_back(link);
  }
  return out;
}

WordPairSet intersect(const DirectionalAlignment& fwd, const DirectionalAlignment& rev) {
  std::vector<WordPair> pairs;
  for (std::size_t j = 0; j < fwd.links.size(); ++j) {
    const auto& i = fwd.links[j];
    if (!i || *i >= rev.links.size()) continue;
    const auto& back = rev.links[*i];
    if (back && *back == j) pairs.push_back({*i, j});
  }
  return WordPairSet(std::move(pairs));
}

ParallelCorpus extract_word_pairs(const ParallelCorpus& corpus, const ExtractOptions& opts,
                                  Ibm1Model* fwd_model, Ibm1Model* rev_model) {
  Ibm1Model fwd = ibm1_train(corpus, opts.iterations);
  Ibm1Model rev = ibm1_train(corpus.reversed(), opts.iterations);

  ParallelCorpus out{corpus.src_language, corpus.tgt_language, {}};
  out.entries.reserve(corpus.size());
  for (const auto& e : corpus.entries) {
    auto f = ibm1_align(fwd.table, e.src, e.tgt);
    auto r = ibm1_align(rev.table, e.tgt, e.src);
    out.entries.push_back({e.src, e.tgt, intersect(f, r)});
  }
  if (fwd_model) *fwd_model = std::move(fwd);
  if (rev_model) *rev_model = std::move(rev);
  return out;
}

}  // namespace xalign
