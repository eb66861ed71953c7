#include <cmath>

#include "xalign/align.h"
#include "xalign/error.h"
#include "xalign/numeric/random.h"

namespace xalign {

std::string to_string(MapperKind kind) {
  return kind == MapperKind::kLinear ? "linear" : "residual-mlp";
}

MapperKind mapper_kind_from_string(const std::string& name) {
  if (name == "linear") return MapperKind::kLinear;
  if (name == "residual-mlp" || name == "mlp") return MapperKind::kResidualMlp;
  throw UsageError("unknown mapper kind '" + name + "' (expected linear or residual-mlp)");
}

Mapper Mapper::identity(MapperKind kind, std::size_t dim, std::size_t hidden_dim,
                        std::uint64_t seed, std::size_t languages) {
  if (dim == 0) throw UsageError("mapper dimension must be positive");
  if (languages > 0 && kind != MapperKind::kResidualMlp)
    throw UsageError("language codes require the residual-mlp mapper");
  Mapper m;
  m.kind_ = kind;
  m.dim_ = dim;
  if (kind == MapperKind::kLinear) {
    m.params_.assign(dim * dim + dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) m.params_[i * dim + i] = 1.0;
    return m;
  }
  m.hidden_ = hidden_dim == 0 ? dim : hidden_dim;
  m.languages_ = languages;
  const std::size_t h = m.hidden_;
  m.params_.assign(h * dim + h + dim * h + dim + languages * h, 0.0);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < h * dim; ++i) m.params_[i] = scale * rng.normal();
  return m;
}

namespace {

void check_language(std::size_t language, std::size_t languages) {
  if (languages > 0 && language >= languages)
    throw DataError("mapper: language code " + std::to_string(language) +
                    " out of range (mapper knows " + std::to_string(languages) + ")");
}

}  // namespace

void Mapper::forward_into(std::span<const double> v, std::span<double> out,
                          std::span<double> hidden, std::size_t language) const {
  if (v.size() != dim_)
    throw DataError("mapper: input has dimension " + std::to_string(v.size()) +
                    ", mapper expects " + std::to_string(dim_));
  check_language(language, languages_);
  const double* p = params_.data();
  if (kind_ == MapperKind::kLinear) {
    const double* bias = p + dim_ * dim_;
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = bias[i];
      const double* row = p + i * dim_;
      for (std::size_t j = 0; j < dim_; ++j) s += row[j] * v[j];
      out[i] = s;
    }
    return;
  }
  const std::size_t h = hidden_;
  const double* w1 = p;
  const double* b1 = w1 + h * dim_;
  const double* w2 = b1 + h;
  const double* b2 = w2 + dim_ * h;
  const double* c = languages_ ? b2 + dim_ + language * h : nullptr;
  for (std::size_t k = 0; k < h; ++k) {
    double s = c ? b1[k] + c[k] : b1[k];
    const double* row = w1 + k * dim_;
    for (std::size_t j = 0; j < dim_; ++j) s += row[j] * v[j];
    hidden[k] = std::tanh(s);
  }
  for (std::size_t i = 0; i < dim_; ++i) {
    double s = v[i] + b2[i];
    const double* row = w2 + i * h;
    for (std::size_t k = 0; k < h; ++k) s += row[k] * hidden[k];
    out[i] = s;
  }
}

std::vector<double> Mapper::forward(std::span<const double> v, std::size_t language) const {
  std::vector<double> out(dim_), hidden(hidden_);
  forward_into(v, out, hidden, language);
  return out;
}

void Mapper::backward(std::span<const double> v, std::span<const double> hidden,
                      std::span<const double> upstream, std::span<double> grad,
                      std::size_t language) const {
  check_language(language, languages_);
  double* g = grad.data();
  if (kind_ == MapperKind::kLinear) {
    double* gb = g + dim_ * dim_;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double u = upstream[i];
      if (u == 0.0) continue;
      double* row = g + i * dim_;
      for (std::size_t j = 0; j < dim_; ++j) row[j] += u * v[j];
      gb[i] += u;
    }
    return;
  }
  const std::size_t h = hidden_;
  const double* w2 = params_.data() + h * dim_ + h;
  double* gw1 = g;
  double* gb1 = gw1 + h * dim_;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + dim_ * h;
  double* gc = languages_ ? gb2 + dim_ + language * h : nullptr;
  // dL/d(hidden) = W₂ᵀ·upstream, then through tanh' = 1 − a².
  std::vector<double> dz(h, 0.0);
  for (std::size_t i = 0; i < dim_; ++i) {
    const double u = upstream[i];
    if (u == 0.0) continue;
    gb2[i] += u;
    double* grow = gw2 + i * h;
    const double* wrow = w2 + i * h;
    for (std::size_t k = 0; k < h; ++k) {
      grow[k] += u * hidden[k];
      dz[k] += wrow[k] * u;
    }
  }
  for (std::size_t k = 0; k < h; ++k) {
    const double d = dz[k] * (1.0 - hidden[k] * hidden[k]);
    if (d == 0.0) continue;
    gb1[k] += d;
    if (gc) gc[k] += d;
    double* row = gw1 + k * dim_;
    for (std::size_t j = 0; j < dim_; ++j) row[j] += d * v[j];
  }
}

ContextualEmbeddingSet Mapper::apply(const ContextualEmbeddingSet& set,
                                     std::size_t language) const {
  check_language(language, languages_);
  if (set.dim != dim_)
    throw DataError("mapper: embeddings are " + std::to_string(set.dim) +
                    "-dimensional, mapper expects " + std::to_string(dim_));
  ContextualEmbeddingSet out;
  out.dim = dim_;
  out.sentences.reserve(set.size());
  std::vector<double> hidden(hidden_);
  for (const auto& s : set.sentences) {
    Matrix m(s.rows(), dim_);
    for (std::size_t t = 0; t < s.rows(); ++t) forward_into(s.row(t), m.row(t), hidden, language);
    out.sentences.push_back(std::move(m));
  }
  return out;
}

namespace {

LossValue compute_loss(const Mapper& mapper, std::span<const SentencePairView> batch,
                       double lambda, bool allow_empty) {
  if (batch.empty()) throw DataError("alignment_loss: empty batch");
  const std::size_t d = mapper.dim();
  const std::size_t h = mapper.hidden_dim();

  std::size_t pair_count = 0, tgt_tokens = 0;
  for (const auto& item : batch) {
    if (item.src->cols() != d || item.tgt->cols() != d || item.tgt_base->cols() != d)
      throw DataError("alignment_loss: vector dimension does not match mapper");
    if (item.tgt_base->rows() != item.tgt->rows())
      throw DataError("alignment_loss: target base vectors do not match target tokens");
    item.pairs->check_bounds(item.src->rows(), item.tgt->rows());
    pair_count += item.pairs->size();
    tgt_tokens += item.tgt->rows();
  }
  if (pair_count == 0 && !allow_empty)
    throw DataError("alignment_loss: batch contains no word pairs");

  LossValue out;
  out.gradient.assign(mapper.params().size(), 0.0);
  const double inv_pairs = pair_count ? 1.0 / static_cast<double>(pair_count) : 0.0;
  const double inv_tokens = tgt_tokens ? 1.0 / static_cast<double>(tgt_tokens) : 0.0;

  for (const auto& item : batch) {
    const Matrix& src = *item.src;
    const Matrix& tgt = *item.tgt;
    const Matrix& base = *item.tgt_base;
    Matrix src_out(src.rows(), d), tgt_out(tgt.rows(), d);
    Matrix src_hidden(src.rows(), h), tgt_hidden(tgt.rows(), h);
    Matrix src_up(src.rows(), d), tgt_up(tgt.rows(), d);

    for (std::size_t t = 0; t < tgt.rows(); ++t)
      mapper.forward_into(tgt.row(t), tgt_out.row(t), tgt_hidden.row(t), 0);
    std::vector<bool> src_used(src.rows(), false);
    for (const auto& p : *item.pairs) src_used[p.src] = true;
    for (std::size_t t = 0; t < src.rows(); ++t)
      if (src_used[t])
        mapper.forward_into(src.row(t), src_out.row(t), src_hidden.row(t), item.src_language);

    for (const auto& p : *item.pairs) {
      auto xs = src_out.row(p.src);
      auto ys = tgt_out.row(p.tgt);
      auto gx = src_up.row(p.src);
      auto gy = tgt_up.row(p.tgt);
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = xs[i] - ys[i];
        out.alignment += diff * diff * inv_pairs;
        gx[i] += 2.0 * diff * inv_pairs;
        gy[i] -= 2.0 * diff * inv_pairs;
      }
    }
    for (std::size_t t = 0; t < tgt.rows(); ++t) {
      auto ys = tgt_out.row(t);
      auto y0 = base.row(t);
      auto gy = tgt_up.row(t);
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = ys[i] - y0[i];
        out.anchor += diff * diff * inv_tokens;
        gy[i] += 2.0 * lambda * diff * inv_tokens;
      }
    }

    for (std::size_t t = 0; t < src.rows(); ++t)
      if (src_used[t])
        mapper.backward(src.row(t), src_hidden.row(t), src_up.row(t), out.gradient,
                        item.src_language);
    for (std::size_t t = 0; t < tgt.rows(); ++t)
      mapper.backward(tgt.row(t), tgt_hidden.row(t), tgt_up.row(t), out.gradient, 0);
  }
  out.total = out.alignment + lambda * out.anchor;
  return out;
}

}  // namespace

LossValue alignment_loss(const Mapper& mapper, std::span<const SentencePairView> batch,
                         double lambda) {
  return compute_loss(mapper, batch, lambda, false);
}

LossValue alignment_loss_allow_empty(const Mapper& mapper,
                                     std::span<const SentencePairView> batch, double lambda) {
  return compute_loss(mapper, batch, lambda, true);
}

}  // namespace xalign
