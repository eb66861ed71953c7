#include "xalign/embed.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xalign/error.h"

namespace xalign {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'T', 'X', 'E'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError(std::string("truncated embedding file while reading ") + what);
  return v;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

std::size_t ContextualEmbeddingSet::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.rows();
  return n;
}

void ContextualEmbeddingSet::validate() const {
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    if (sentences[k].rows() > 0 && sentences[k].cols() != dim)
      throw DataError("embedding sentence " + std::to_string(k) + " has dimension " +
                      std::to_string(sentences[k].cols()) + ", expected " + std::to_string(dim));
    if (!sentences[k].all_finite())
      throw DataError("embedding sentence " + std::to_string(k) + " has non-finite values");
  }
}

void ContextualEmbeddingSet::check_covers(const std::vector<const Sentence*>& side) const {
  if (side.size() != sentences.size())
    throw DataError("embedding set has " + std::to_string(sentences.size()) +
                    " sentences, corpus side has " + std::to_string(side.size()));
  for (std::size_t k = 0; k < side.size(); ++k) {
    if (side[k]->size() != sentences[k].rows())
      throw DataError("sentence " + std::to_string(k) + ": " +
                      std::to_string(sentences[k].rows()) + " vectors for " +
                      std::to_string(side[k]->size()) + " tokens");
  }
}

ContextualEmbeddingSet slice_set(const ContextualEmbeddingSet& set, std::size_t begin,
                                 std::size_t end) {
  if (begin > end || end > set.size()) throw DataError("slice_set: range out of bounds");
  ContextualEmbeddingSet out;
  out.dim = set.dim;
  out.sentences.assign(set.sentences.begin() + static_cast<std::ptrdiff_t>(begin),
                       set.sentences.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

std::vector<const Sentence*> source_side(const ParallelCorpus& corpus) {
  std::vector<const Sentence*> out;
  out.reserve(corpus.size());
  for (const auto& e : corpus.entries) out.push_back(&e.src);
  return out;
}

std::vector<const Sentence*> target_side(const ParallelCorpus& corpus) {
  std::vector<const Sentence*> out;
  out.reserve(corpus.size());
  for (const auto& e : corpus.entries) out.push_back(&e.tgt);
  return out;
}

ContextualEmbeddingSet load_embeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path.string() + ": magic mismatch (not a CTXE embedding file)");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion)
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));

  ContextualEmbeddingSet set;
  set.dim = read_u32(in, "dim");
  const std::uint32_t count = read_u32(in, "sentence count");
  set.sentences.reserve(count);
  std::vector<float> buf;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t tokens = read_u32(in, "token count");
    buf.resize(static_cast<std::size_t>(tokens) * set.dim);
    if (!in.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float))))
      throw DataError(path.string() + ": truncated payload in sentence " + std::to_string(k) +
                      " of " + std::to_string(count));
    Matrix m(tokens, set.dim);
    auto d = m.data();
    for (std::size_t i = 0; i < buf.size(); ++i) d[i] = buf[i];
    set.sentences.push_back(std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError(path.string() + ": trailing bytes after declared payload");
  set.validate();
  return set;
}

void write_embeddings(const ContextualEmbeddingSet& set, const fs::path& path) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(set.dim));
  write_u32(out, static_cast<std::uint32_t>(set.sentences.size()));
  std::vector<float> buf;
  for (const auto& s : set.sentences) {
    write_u32(out, static_cast<std::uint32_t>(s.rows()));
    buf.assign(s.data().begin(), s.data().end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

bool StaticEmbeddingTable::add(const std::string& word, std::span<const double> vec) {
  if (vec.size() != dim_)
    throw DataError("vector for '" + word + "' has dimension " + std::to_string(vec.size()) +
                    ", table dimension is " + std::to_string(dim_));
  if (index_.count(word)) return false;
  index_.emplace(word, words_.size());
  words_.push_back(word);
  vectors_.emplace_back(vec.begin(), vec.end());
  return true;
}

const std::vector<double>* StaticEmbeddingTable::find(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? nullptr : &vectors_[it->second];
}

StaticEmbeddingTable load_static_vectors(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  std::size_t count = 0, dim = 0;
  {
    std::istringstream header(line);
    if (!(header >> count >> dim) || dim == 0)
      throw DataError(path.string() + ": header must be 'count dim'");
  }
  StaticEmbeddingTable table(dim);
  std::vector<double> vec(dim);
  std::size_t read = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_tokens(line);
    if (fields.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(read + 2);
    if (fields.size() != dim + 1)
      throw DataError(where + ": expected " + std::to_string(dim) + " components, got " +
                      std::to_string(fields.size() - 1));
    for (std::size_t i = 0; i < dim; ++i) {
      const std::string& f = fields[i + 1];
      char* end = nullptr;
      vec[i] = std::strtod(f.c_str(), &end);
      if (end != f.c_str() + f.size() || !std::isfinite(vec[i]))
        throw DataError(where + ": non-numeric component '" + f + "'");
    }
    table.add(fields[0], vec);
    ++read;
  }
  if (read != count)
    throw DataError(path.string() + ": header declares " + std::to_string(count) +
                    " vectors, found " + std::to_string(read));
  return table;
}

void normalize_rows(StaticEmbeddingTable& table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto& v = table.at(i);
    const double n = norm(v);
    if (n == 0.0) throw NumericError("zero-norm vector for '" + table.words()[i] + "'");
    for (double& x : v) x /= n;
  }
}

void center_rows(StaticEmbeddingTable& table) {
  std::vector<double> mean(table.dim(), 0.0);
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t d = 0; d < table.dim(); ++d) mean[d] += table.at(i)[d];
  for (double& m : mean) m /= static_cast<double>(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t d = 0; d < table.dim(); ++d) table.at(i)[d] -= mean[d];
}

StaticEmbeddingTable normalize_center_normalize(StaticEmbeddingTable table) {
  if (table.size() < 2)
    throw DataError("normalize_center_normalize needs at least 2 vectors");
  normalize_rows(table);
  center_rows(table);
  normalize_rows(table);
  return table;
}

std::vector<double> sentence_augment(std::span<const double> word_vec,
                                     const Matrix& sentence_vectors) {
  const std::size_t dim = word_vec.size();
  if (sentence_vectors.rows() == 0) throw DataError("sentence_augment: empty sentence");
  if (sentence_vectors.cols() != dim)
    throw DataError("sentence_augment: dimension mismatch (" + std::to_string(dim) + " vs " +
                    std::to_string(sentence_vectors.cols()) + ")");
  std::vector<double> out(4 * dim);
  std::copy(word_vec.begin(), word_vec.end(), out.begin());
  auto first = sentence_vectors.row(0);
  for (std::size_t d = 0; d < dim; ++d) {
    out[dim + d] = 0.0;
    out[2 * dim + d] = first[d];
    out[3 * dim + d] = first[d];
  }
  for (std::size_t r = 0; r < sentence_vectors.rows(); ++r) {
    auto v = sentence_vectors.row(r);
    for (std::size_t d = 0; d < dim; ++d) {
      out[dim + d] += v[d];
      out[2 * dim + d] = std::max(out[2 * dim + d], v[d]);
      out[3 * dim + d] = std::min(out[3 * dim + d], v[d]);
    }
  }
  for (std::size_t d = 0; d < dim; ++d)
    out[dim + d] /= static_cast<double>(sentence_vectors.rows());
  return out;
}

ContextualEmbeddingSet augmented_static_set(const StaticEmbeddingTable& table,
                                            const std::vector<const Sentence*>& side,
                                            bool augment) {
  const std::size_t dim = table.dim();
  ContextualEmbeddingSet set;
  set.dim = augment ? 4 * dim : dim;
  set.sentences.reserve(side.size());
  for (const Sentence* s : side) {
    Matrix words(s->size(), dim);
    for (std::size_t t = 0; t < s->size(); ++t) {
      if (const auto* v = table.find(s->tokens[t]))
        std::copy(v->begin(), v->end(), words.row(t).begin());
    }
    if (!augment) {
      set.sentences.push_back(std::move(words));
      continue;
    }
    Matrix out(s->size(), 4 * dim);
    for (std::size_t t = 0; t < s->size(); ++t) {
      auto aug = sentence_augment(words.row(t), words);
      std::copy(aug.begin(), aug.end(), out.row(t).begin());
    }
    set.sentences.push_back(std::move(out));
  }
  return set;
}

}  // namespace xalign
