#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "xalign/align.h"
#include "xalign/error.h"
#include "xalign/numeric/random.h"

namespace xalign {

void AlignConfig::validate() const {
  if (!(lambda >= 0.0)) throw UsageError("lambda must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    throw UsageError("warmup fraction must lie in [0, 1]");
  if (pairs_per_language == 0) throw UsageError("batch size per language must be >= 1");
  if (!(base_lr >= 0.0)) throw UsageError("learning rate must be >= 0");
}

void TrainTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "step,lr,L,R,total\n";
  for (const auto& r : rows)
    out << r.step << ',' << r.lr << ',' << r.alignment << ',' << r.anchor << ',' << r.total
        << '\n';
}

std::size_t finetune_total_steps(std::span<const TrainingCorpus> corpora,
                                 const AlignConfig& cfg) {
  std::size_t largest = 0;
  for (const auto& c : corpora) largest = std::max(largest, c.corpus->size());
  const std::size_t per_epoch = (largest + cfg.pairs_per_language - 1) / cfg.pairs_per_language;
  return per_epoch * cfg.epochs;
}

std::size_t warmup_steps_for(std::size_t total_steps, double warmup_fraction) {
  return static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
}

namespace {

// Endless seeded sampler over entry indices; reshuffles after each pass.
class CyclingSampler {
 public:
  CyclingSampler(std::size_t n, Rng rng) : order_(n), rng_(std::move(rng)) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

}  // namespace

FinetuneResult finetune_align(Mapper mapper, std::span<const TrainingCorpus> corpora,
                              const AlignConfig& cfg) {
  cfg.validate();
  if (corpora.empty()) throw DataError("finetune_align: no training corpora");
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    const auto& tc = corpora[c];
    if (tc.corpus->empty())
      throw DataError("finetune_align: corpus " + std::to_string(c) + " is empty");
    if (tc.src->dim != mapper.dim() || tc.tgt->dim != mapper.dim())
      throw DataError("finetune_align: corpus " + std::to_string(c) +
                      " embeddings do not match the mapper dimension");
    tc.src->check_covers(source_side(*tc.corpus));
    tc.tgt->check_covers(target_side(*tc.corpus));
    if (mapper.languages() > 0 && c + 1 >= mapper.languages())
      throw DataError("finetune_align: mapper has no language code for corpus " +
                      std::to_string(c));
    if (c > 0 && tc.corpus->tgt_language != corpora[0].corpus->tgt_language)
      throw DataError("finetune_align: corpora must share the target language");
  }

  FinetuneResult result{std::move(mapper), {}};
  const std::size_t total = finetune_total_steps(corpora, cfg);
  if (total == 0) return result;

  AdamConfig adam_cfg;
  adam_cfg.base_lr = cfg.base_lr;
  adam_cfg.beta1 = cfg.beta1;
  adam_cfg.beta2 = cfg.beta2;
  adam_cfg.epsilon = cfg.epsilon;
  adam_cfg.total_steps = total;
  adam_cfg.warmup_steps = warmup_steps_for(total, cfg.warmup_fraction);
  adam_cfg.schedule = cfg.schedule;
  AdamState adam(adam_cfg, result.mapper.params().size());

  std::vector<CyclingSampler> samplers;
  samplers.reserve(corpora.size());
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    samplers.emplace_back(corpora[c].corpus->size(),
                          Rng::substream(cfg.seed, "align/corpus" + std::to_string(c)));
  }

  std::vector<double> grad(result.mapper.params().size());
  std::vector<SentencePairView> batch;
  result.trace.rows.reserve(total);
  for (std::size_t step = 1; step <= total; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    TraceRow row;
    row.step = step;
    for (std::size_t c = 0; c < corpora.size(); ++c) {
      const auto& tc = corpora[c];
      batch.clear();
      for (std::size_t b = 0; b < cfg.pairs_per_language; ++b) {
        const std::size_t k = samplers[c].next();
        // f0 is the frozen base embedding, so the target vectors are their own anchor.
        batch.push_back({&tc.src->sentences[k], &tc.tgt->sentences[k], &tc.tgt->sentences[k],
                         &tc.corpus->entries[k].pairs,
                         result.mapper.languages() > 0 ? c + 1 : 0});
      }
      const LossValue loss = alignment_loss_allow_empty(result.mapper, batch, cfg.lambda);
      row.alignment += loss.alignment;
      row.anchor += loss.anchor;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += loss.gradient[i];
    }
    row.total = row.alignment + cfg.lambda * row.anchor;
    row.lr = adam_step(adam, result.mapper.params(), grad);
    result.trace.rows.push_back(row);
  }
  return result;
}

}  // namespace xalign
