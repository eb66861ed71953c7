#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xalign/corpus.h"
#include "xalign/embed.h"
#include "xalign/numeric/adam.h"
#include "xalign/numeric/matrix.h"

namespace xalign {

// ---------------------------------------------------------------------------
// Orthogonal rotation
// ---------------------------------------------------------------------------

struct RotationMap {
  Matrix w;  // d×d, applied as v ↦ W·v

  std::size_t dim() const { return w.rows(); }
};

// Rows of X and Y are paired vectors. Returns the orthogonal W minimizing
// Σ‖W·xₖ − yₖ‖², i.e. W = V·Uᵀ for XᵀY = U·Σ·Vᵀ. Reflections are allowed.
RotationMap procrustes_fit(const Matrix& x, const Matrix& y);

// Σ‖W·xₖ − yₖ‖²
double procrustes_objective(const Matrix& w, const Matrix& x, const Matrix& y);

ContextualEmbeddingSet rotation_apply(const RotationMap& rotation,
                                      const ContextualEmbeddingSet& set);

// Stacks the vectors of every linked word pair into row-aligned matrices.
struct PairedRows {
  Matrix src;
  Matrix tgt;
};
PairedRows paired_rows(const ContextualEmbeddingSet& src_set,
                       const ContextualEmbeddingSet& tgt_set, const ParallelCorpus& corpus);

RotationMap word_rotation_fit(const ContextualEmbeddingSet& src_set,
                              const ContextualEmbeddingSet& tgt_set,
                              const ParallelCorpus& corpus);

// Procrustes over per-sentence mean vectors.
RotationMap sentence_rotation_fit(const ContextualEmbeddingSet& src_set,
                                  const ContextualEmbeddingSet& tgt_set,
                                  const ParallelCorpus& corpus);

// ---------------------------------------------------------------------------
// Trainable mapper
// ---------------------------------------------------------------------------

enum class MapperKind : std::uint8_t { kLinear = 0, kResidualMlp = 1 };

std::string to_string(MapperKind kind);
MapperKind mapper_kind_from_string(const std::string& name);

// Shared transform applied on top of frozen base vectors.
//   linear:        y = M·v + b
//   residual-mlp:  y = v + W₂·tanh(W₁·v + b₁ + c_ℓ) + b₂
// c_ℓ is a per-language hidden bias, present only when the mapper is built
// with languages > 0. Language 0 is the shared target language; source
// languages are numbered from 1. Without it the mapper sees only vectors.
// Parameter layout: linear [M (d×d), b (d)]; residual-mlp [W₁ (h×d), b₁ (h),
// W₂ (d×h), b₂ (d), C (languages×h)], all row-major.
class Mapper {
 public:
  Mapper() = default;
  // Identity at initialization: M = I, b = 0, or W₂ = 0, b₂ = 0, C = 0. W₁ is
  // drawn from N(0, 1/d) with `seed` so the hidden layer is not degenerate.
  static Mapper identity(MapperKind kind, std::size_t dim, std::size_t hidden_dim = 0,
                         std::uint64_t seed = 0, std::size_t languages = 0);

  MapperKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t hidden_dim() const { return hidden_; }
  std::size_t languages() const { return languages_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> forward(std::span<const double> v, std::size_t language = 0) const;
  // Writes forward(v) to `out`; `hidden` receives tanh activations for the
  // MLP kind (unused for linear).
  void forward_into(std::span<const double> v, std::span<double> out, std::span<double> hidden,
                    std::size_t language = 0) const;
  // Accumulates ∂/∂θ of ⟨upstream, forward(v)⟩ into `grad`.
  void backward(std::span<const double> v, std::span<const double> hidden,
                std::span<const double> upstream, std::span<double> grad,
                std::size_t language = 0) const;

  ContextualEmbeddingSet apply(const ContextualEmbeddingSet& set, std::size_t language = 0) const;

  friend bool operator==(const Mapper&, const Mapper&) = default;

 private:
  MapperKind kind_ = MapperKind::kLinear;
  std::size_t dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t languages_ = 0;
  std::vector<double> params_;
};

inline std::vector<double> mapper_forward(const Mapper& m, std::span<const double> v) {
  return m.forward(v);
}

// One sentence pair of a batch. The anchor term compares mapped target
// vectors against `tgt_base` (the frozen initial embeddings).
struct SentencePairView {
  const Matrix* src = nullptr;
  const Matrix* tgt = nullptr;
  const Matrix* tgt_base = nullptr;
  const WordPairSet* pairs = nullptr;
  std::size_t src_language = 0;  // mapper language code of the source side
};

struct LossValue {
  double alignment = 0.0;  // L: mean over word pairs of ‖m(x) − m(y)‖²
  double anchor = 0.0;     // R: mean over target tokens of ‖m(y) − y₀‖²
  double total = 0.0;      // L + λ·R
  std::vector<double> gradient;
};

// Throws DataError if the batch holds no word pairs.
LossValue alignment_loss(const Mapper& mapper, std::span<const SentencePairView> batch,
                         double lambda);

// Same as alignment_loss, but a batch without word pairs contributes L = 0.
LossValue alignment_loss_allow_empty(const Mapper& mapper,
                                     std::span<const SentencePairView> batch, double lambda);

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

struct AlignConfig {
  double lambda = 1.0;
  double base_lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double warmup_fraction = 0.10;
  std::size_t epochs = 1;
  std::size_t pairs_per_language = 2;
  LrSchedule schedule = LrSchedule::kConstant;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  std::size_t step = 0;
  double lr = 0.0;
  double alignment = 0.0;
  double anchor = 0.0;
  double total = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainingCorpus {
  const ParallelCorpus* corpus = nullptr;
  const ContextualEmbeddingSet* src = nullptr;
  const ContextualEmbeddingSet* tgt = nullptr;
};

struct FinetuneResult {
  Mapper mapper;
  TrainTrace trace;
};

// Each step draws cfg.pairs_per_language sentence pairs from every corpus,
// sums the per-corpus objectives L + λR, and applies one Adam update. An
// epoch is one pass over the largest corpus; smaller corpora reshuffle and
// cycle when exhausted. Warmup covers the first warmup_fraction of steps.
// A language-aware mapper sees corpus c's source side as language c + 1.
FinetuneResult finetune_align(Mapper mapper, std::span<const TrainingCorpus> corpora,
                              const AlignConfig& cfg);

std::size_t finetune_total_steps(std::span<const TrainingCorpus> corpora,
                                 const AlignConfig& cfg);
std::size_t warmup_steps_for(std::size_t total_steps, double warmup_fraction);

// ---------------------------------------------------------------------------
// Serialization ("CMAP" / "CROT" envelopes, little-endian)
// ---------------------------------------------------------------------------

void write_mapper(const Mapper& mapper, const std::filesystem::path& path);
Mapper load_mapper(const std::filesystem::path& path);
void write_rotation(const RotationMap& rotation, const std::filesystem::path& path);
RotationMap load_rotation(const std::filesystem::path& path);

}  // namespace xalign
