#include "xalign/analysis.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include <json.hpp>

#include "xalign/error.h"
#include "xalign/numeric/svd.h"

namespace xalign {

namespace {

struct TagGroup {
  const char* name;
  std::vector<std::string> members;
};

const std::vector<TagGroup>& tag_groups() {
  static const std::vector<TagGroup> groups = {
      {"lexical-overlap", {"NUM", "PUNCT", "PROPN"}},
      {"closed", {"DET", "ADP", "CCONJ", "SCONJ", "PRON", "AUX"}},
      {"open", {"NOUN", "ADV", "ADJ", "VERB"}},
  };
  return groups;
}

std::size_t parse_size(const std::string& s, const std::string& where) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw DataError(where + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

bool is_upos_tag(std::string_view tag) {
  static constexpr std::string_view kTags[] = {"ADJ",  "ADP",   "ADV",  "AUX",  "CCONJ", "DET",
                                               "INTJ", "NOUN",  "NUM",  "PART", "PRON",  "PROPN",
                                               "PUNCT", "SCONJ", "SYM", "VERB", "X"};
  return std::find(std::begin(kTags), std::end(kTags), tag) != std::end(kTags);
}

PosTable load_pos_tags(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  PosTable tags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_tokens(line);
    if (fields.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3) throw DataError(where + ": expected 3 tab-separated columns");
    if (!is_upos_tag(fields[2])) throw DataError(where + ": unknown UPOS tag '" + fields[2] + "'");
    tags[{parse_size(fields[0], where), parse_size(fields[1], where)}] = fields[2];
  }
  return tags;
}

PosBreakdown pos_breakdown(const DirectionReport& direction, const PosTable& tags) {
  std::map<std::string, TagAccuracy> per_tag;
  for (const auto& o : direction.outcomes) {
    auto it = tags.find(o.query);
    const std::string tag = it == tags.end() ? std::string(kUntagged) : it->second;
    auto& row = per_tag[tag];
    row.tag = tag;
    ++row.pairs;
    row.correct += o.correct ? 1 : 0;
  }

  PosBreakdown out;
  for (auto& [tag, row] : per_tag) {
    row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.pairs);
    out.tags.push_back(row);
  }
  for (const auto& g : tag_groups()) {
    GroupAccuracy group{g.name, g.members, 0, 0, std::nullopt};
    for (const auto& m : g.members) {
      auto it = per_tag.find(m);
      if (it == per_tag.end()) continue;
      group.pairs += it->second.pairs;
      group.correct += it->second.correct;
    }
    if (group.pairs > 0)
      group.accuracy = static_cast<double>(group.correct) / static_cast<double>(group.pairs);
    out.groups.push_back(std::move(group));
  }
  return out;
}

void PosBreakdown::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "kind,name,pairs,correct,accuracy\n";
  for (const auto& t : tags)
    out << "tag," << t.tag << ',' << t.pairs << ',' << t.correct << ',' << t.accuracy << '\n';
  for (const auto& g : groups) {
    out << "group," << g.group << ',' << g.pairs << ',' << g.correct << ',';
    if (g.accuracy) out << *g.accuracy;
    out << '\n';
  }
}

std::string PosBreakdown::to_json() const {
  nlohmann::ordered_json j;
  j["tags"] = nlohmann::ordered_json::array();
  for (const auto& t : tags)
    j["tags"].push_back(
        {{"tag", t.tag}, {"pairs", t.pairs}, {"correct", t.correct}, {"accuracy", t.accuracy}});
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : groups)
    j["groups"].push_back({{"group", g.group},
                           {"members", g.members},
                           {"pairs", g.pairs},
                           {"correct", g.correct},
                           {"accuracy", optional_json(g.accuracy)}});
  return j.dump(2) + "\n";
}

FrequencyRanks::FrequencyRanks(const std::vector<const Sentence*>& side) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const Sentence* s : side)
    for (const auto& w : s->tokens) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t i = 0; i < sorted.size(); ++i) ranks_.emplace(sorted[i].first, i + 1);
}

std::size_t FrequencyRanks::rank(const std::string& word) const {
  auto it = ranks_.find(word);
  return it == ranks_.end() ? ranks_.size() + 1 : it->second;
}

std::vector<double> default_frequency_bin_edges() {
  return {0, 10, 100, 1000, 10000, std::numeric_limits<double>::infinity()};
}

std::vector<FrequencyBin> freq_rank_curve(const RetrievalReport& report,
                                          const ParallelCorpus& eval_corpus,
                                          const FrequencyRanks& src_ranks,
                                          const FrequencyRanks& tgt_ranks,
                                          std::span<const double> bin_edges) {
  if (bin_edges.size() < 2) throw UsageError("frequency bins need at least two edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    if (!(bin_edges[i] > bin_edges[i - 1]))
      throw UsageError("frequency bin edges must be strictly increasing");

  std::vector<FrequencyBin> bins;
  for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i)
    bins.push_back({bin_edges[i], bin_edges[i + 1], 0, 0, std::nullopt});

  for (const auto& o : report.src_to_tgt.outcomes) {
    const auto& src_word = eval_corpus.entries.at(o.query.sentence).src.tokens.at(o.query.token);
    const auto& tgt_word = eval_corpus.entries.at(o.gold.sentence).tgt.tokens.at(o.gold.token);
    const double a = static_cast<double>(src_ranks.rank(src_word));
    const double b = static_cast<double>(tgt_ranks.rank(tgt_word));
    const double delta = std::abs(b - a);
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), delta);
    if (it == bin_edges.begin() || it == bin_edges.end())
      throw DataError("rank difference " + std::to_string(delta) + " outside the bin edges");
    auto& bin = bins[static_cast<std::size_t>(it - bin_edges.begin()) - 1];
    ++bin.pairs;
    bin.correct += o.correct ? 1 : 0;
  }
  for (auto& b : bins)
    if (b.pairs > 0) b.accuracy = static_cast<double>(b.correct) / static_cast<double>(b.pairs);
  return bins;
}

void write_frequency_csv(const std::vector<FrequencyBin>& bins,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "lower,upper,pairs,correct,accuracy\n";
  for (const auto& b : bins) {
    out << b.lower << ',';
    if (std::isinf(b.upper)) out << "inf";
    else out << b.upper;
    out << ',' << b.pairs << ',' << b.correct << ',';
    if (b.accuracy) out << *b.accuracy;
    out << '\n';
  }
}

Projection pca_project(const Matrix& vectors, std::size_t out_dim) {
  const std::size_t n = vectors.rows();
  const std::size_t d = vectors.cols();
  if (n < 2) throw DataError("pca_project needs at least 2 points");
  if (out_dim == 0) throw UsageError("pca_project: out_dim must be >= 1");

  Matrix centered = vectors;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += centered(r, c);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered(r, c) -= mean;
  }

  Projection proj;
  proj.points = Matrix(n, out_dim);
  const double scale = 1.0 / static_cast<double>(n - 1);
  for (double x : centered.data()) proj.total_variance += x * x * scale;

  const Svd dec = svd(centered);
  const std::size_t kept = std::min(out_dim, dec.s.size());
  for (std::size_t k = 0; k < kept; ++k) {
    proj.captured_variance += dec.s[k] * dec.s[k] * scale;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(dec.v(i, k)) > std::abs(dec.v(arg, k))) arg = i;
    const double sign = dec.v(arg, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += centered(r, i) * dec.v(i, k);
      proj.points(r, k) = sign * s;
    }
  }
  return proj;
}

double correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DataError("correlation: sequences differ in length");
  if (xs.size() < 2) throw DataError("correlation: need at least 2 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// (x, y, word, language, phase) rows for the first `max_pairs` linked pairs.
void write_projection_rows(const ParallelCorpus& corpus, const ContextualEmbeddingSet& src,
                      const ContextualEmbeddingSet& tgt, const std::string& phase,
                      std::size_t max_pairs, std::ostream& out) {
  std::vector<std::pair<TokenRef, TokenRef>> picks;
  for (std::size_t k = 0; k < corpus.size() && picks.size() < max_pairs; ++k)
    for (const auto& p : corpus.entries[k].pairs) {
      if (picks.size() >= max_pairs) break;
      picks.push_back({{k, p.src}, {k, p.tgt}});
    }
  if (picks.empty()) return;
  Matrix points(2 * picks.size(), src.dim);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    auto a = src.vec(picks[i].first.sentence, picks[i].first.token);
    auto b = tgt.vec(picks[i].second.sentence, picks[i].second.token);
    std::copy(a.begin(), a.end(), points.row(2 * i).begin());
    std::copy(b.begin(), b.end(), points.row(2 * i + 1).begin());
  }
  const Projection proj = pca_project(points, 2);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto& e = corpus.entries[picks[i].first.sentence];
    out << proj.points(2 * i, 0) << ',' << proj.points(2 * i, 1) << ','
        << e.src.tokens[picks[i].first.token] << ',' << corpus.src_language << ',' << phase
        << '\n';
    out << proj.points(2 * i + 1, 0) << ',' << proj.points(2 * i + 1, 1) << ','
        << e.tgt.tokens[picks[i].second.token] << ',' << corpus.tgt_language << ',' << phase
        << '\n';
  }
}


}  // namespace xalign
