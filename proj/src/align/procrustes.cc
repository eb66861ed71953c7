#include <cmath>

#include "xalign/align.h"
#include "xalign/error.h"
#include "xalign/numeric/svd.h"

namespace xalign {

RotationMap procrustes_fit(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw DataError("procrustes_fit: X is " + std::to_string(x.rows()) + "x" +
                    std::to_string(x.cols()) + ", Y is " + std::to_string(y.rows()) + "x" +
                    std::to_string(y.cols()));
  if (x.rows() == 0) throw DataError("procrustes_fit: no paired rows");
  const Svd dec = svd(multiply_at_b(x, y));
  return {multiply(dec.v, dec.u.transposed())};
}

double procrustes_objective(const Matrix& w, const Matrix& x, const Matrix& y) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto mapped = matvec(w, x.row(r));
    total += squared_distance(mapped, y.row(r));
  }
  return total;
}

ContextualEmbeddingSet rotation_apply(const RotationMap& rotation,
                                      const ContextualEmbeddingSet& set) {
  if (rotation.dim() != set.dim)
    throw DataError("rotation_apply: rotation is " + std::to_string(rotation.dim()) +
                    "-dimensional, embeddings are " + std::to_string(set.dim));
  ContextualEmbeddingSet out;
  out.dim = set.dim;
  out.sentences.reserve(set.size());
  for (const auto& s : set.sentences) {
    Matrix m(s.rows(), s.cols());
    for (std::size_t t = 0; t < s.rows(); ++t) {
      auto v = s.row(t);
      auto dst = m.row(t);
      for (std::size_t i = 0; i < set.dim; ++i) dst[i] = dot(rotation.w.row(i), v);
    }
    out.sentences.push_back(std::move(m));
  }
  return out;
}

PairedRows paired_rows(const ContextualEmbeddingSet& src_set,
                       const ContextualEmbeddingSet& tgt_set, const ParallelCorpus& corpus) {
  if (src_set.dim != tgt_set.dim) throw DataError("paired_rows: embedding dimensions differ");
  src_set.check_covers(source_side(corpus));
  tgt_set.check_covers(target_side(corpus));
  const std::size_t n = corpus.pair_count();
  PairedRows out{Matrix(n, src_set.dim), Matrix(n, tgt_set.dim)};
  std::size_t r = 0;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    for (const auto& p : corpus.entries[k].pairs) {
      auto xs = src_set.vec(k, p.src);
      auto ys = tgt_set.vec(k, p.tgt);
      std::copy(xs.begin(), xs.end(), out.src.row(r).begin());
      std::copy(ys.begin(), ys.end(), out.tgt.row(r).begin());
      ++r;
    }
  }
  return out;
}

RotationMap word_rotation_fit(const ContextualEmbeddingSet& src_set,
                              const ContextualEmbeddingSet& tgt_set,
                              const ParallelCorpus& corpus) {
  auto rows = paired_rows(src_set, tgt_set, corpus);
  return procrustes_fit(rows.src, rows.tgt);
}

RotationMap sentence_rotation_fit(const ContextualEmbeddingSet& src_set,
                                  const ContextualEmbeddingSet& tgt_set,
                                  const ParallelCorpus& corpus) {
  if (src_set.dim != tgt_set.dim)
    throw DataError("sentence_rotation_fit: embedding dimensions differ");
  src_set.check_covers(source_side(corpus));
  tgt_set.check_covers(target_side(corpus));
  const std::size_t n = corpus.size();
  Matrix x(n, src_set.dim), y(n, tgt_set.dim);
  auto mean_into = [](const Matrix& s, std::span<double> dst) {
    if (s.rows() == 0) throw DataError("sentence_rotation_fit: empty sentence");
    for (std::size_t t = 0; t < s.rows(); ++t)
      for (std::size_t i = 0; i < s.cols(); ++i) dst[i] += s(t, i);
    for (double& d : dst) d /= static_cast<double>(s.rows());
  };
  for (std::size_t k = 0; k < n; ++k) {
    mean_into(src_set.sentences[k], x.row(k));
    mean_into(tgt_set.sentences[k], y.row(k));
  }
  return procrustes_fit(x, y);
}

}  // namespace xalign
