#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xalign/align.h"
#include "xalign/corpus.h"
#include "xalign/embed.h"

namespace xalign {

enum class Distortion { kOrthogonal, kOrthogonalTanh };

std::string to_string(Distortion d);
Distortion distortion_from_string(const std::string& name);

struct SynthConfig {
  std::size_t vocab_size = 300;
  std::size_t corpus_size = 2000;
  std::size_t min_length = 5;
  std::size_t max_length = 15;
  std::size_t dim = 32;
  double context_mix = 0.3;  // α
  Distortion distortion = Distortion::kOrthogonal;
  double noise = 0.01;  // σ
  double swap_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Ground truth of the target space: D(v) = Q·v or Q·tanh(1.5·v).
struct GoldMap {
  RotationMap q;
  bool nonlinear = false;
};

struct SynthBundle {
  ParallelCorpus corpus;  // gold word pairs
  ContextualEmbeddingSet src_set;
  ContextualEmbeddingSet tgt_set;
  GoldMap gold;
};

inline constexpr double kTanhGain = 1.5;

// Source base vectors are unit Gaussians; target sentences are word-for-word
// translations through a random bijective lexicon (optionally with adjacent
// swaps); target base vectors are D(b) plus σ-scaled Gaussian noise. Token
// vectors are normalize(b[w_i] + α·mean of base vectors at i−1 and i+1).
SynthBundle generate(const SynthConfig& cfg);

// Writes src.txt, tgt.txt, pairs.txt, src.ctxe, tgt.ctxe, gold_map.crot and
// gold_map.json into `dir`.
void write_bundle(const SynthBundle& bundle, const SynthConfig& cfg,
                  const std::filesystem::path& dir);

}  // namespace xalign
