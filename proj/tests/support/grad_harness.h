#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "xalign/align.h"
#include "xalign/numeric/grad_check.h"
#include "xalign/numeric/random.h"

namespace xalign::testing {

// A random batch of sentence pairs with owned storage.
struct RandomBatch {
  std::vector<Matrix> src, tgt, tgt_base;
  std::vector<WordPairSet> pairs;
  std::vector<SentencePairView> views;
};

inline RandomBatch random_batch(std::size_t dim, Rng& rng) {
  RandomBatch b;
  const std::size_t n = 1 + rng.below(4);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t ls = 1 + rng.below(5), lt = 1 + rng.below(5);
    b.src.push_back(random_gaussian(ls, dim, rng));
    b.tgt.push_back(random_gaussian(lt, dim, rng));
    Matrix base = b.tgt.back();
    for (std::size_t i = 0; i < base.rows(); ++i)
      for (std::size_t j = 0; j < dim; ++j) base(i, j) += 0.1 * rng.normal();
    b.tgt_base.push_back(std::move(base));

    std::vector<std::size_t> s(ls), t(lt);
    std::iota(s.begin(), s.end(), 0);
    std::iota(t.begin(), t.end(), 0);
    rng.shuffle(s);
    rng.shuffle(t);
    // At least one link per sentence pair keeps L defined.
    const std::size_t links = 1 + rng.below(std::min(ls, lt));
    std::vector<WordPair> p;
    for (std::size_t i = 0; i < links; ++i) p.push_back({s[i], t[i]});
    b.pairs.emplace_back(std::move(p));
  }
  for (std::size_t k = 0; k < n; ++k)
    b.views.push_back({&b.src[k], &b.tgt[k], &b.tgt_base[k], &b.pairs[k]});
  return b;
}

// Mapper of the given kind with every parameter perturbed away from the
// identity, so no gradient coordinate vanishes structurally.
inline Mapper random_mapper(MapperKind kind, std::size_t dim, std::size_t hidden, Rng& rng,
                            std::size_t languages = 0) {
  Mapper m = Mapper::identity(kind, dim, hidden, rng.next(), languages);
  for (double& p : m.params()) p += 0.3 * rng.normal();
  return m;
}

struct GradientSample {
  double analytic;
  double numeric;
};

// Analytic and central-difference gradient coordinates of L + λR over
// `batches` random batches. With languages > 0 each sentence pair gets a
// random source language code in [1, languages).
inline std::vector<GradientSample> gradient_samples(MapperKind kind, std::size_t batches,
                                                    std::uint64_t seed, bool zero_lambda,
                                                    std::size_t languages = 0) {
  Rng rng(seed);
  std::vector<GradientSample> out;
  for (std::size_t trial = 0; trial < batches; ++trial) {
    const std::size_t dim = 2 + rng.below(5);
    const std::size_t hidden = 2 + rng.below(5);
    const double lambda = zero_lambda ? 0.0 : 0.1 + 2.0 * rng.uniform();
    RandomBatch batch = random_batch(dim, rng);
    if (languages > 0)
      for (auto& v : batch.views) v.src_language = 1 + rng.below(languages - 1);
    const Mapper base = random_mapper(kind, dim, hidden, rng, languages);
    const LossValue analytic = alignment_loss(base, batch.views, lambda);
    const ScalarFn f = [&](std::span<const double> p) {
      Mapper m = base;
      std::copy(p.begin(), p.end(), m.params().begin());
      return alignment_loss(m, batch.views, lambda).total;
    };
    const auto numeric = numeric_gradient(f, base.params());
    for (std::size_t i = 0; i < numeric.size(); ++i) out.push_back({analytic.gradient[i], numeric[i]});
  }
  return out;
}

// Max over coordinates of |a − n| / max(1e-8, |a| + |n|), the grad_check
// metric. λ is drawn from [0.1, 2.1]: at λ = 0 the bias gradients are exactly
// zero and the metric compares zero against finite-difference roundoff.
inline double worst_gradient_error(MapperKind kind, std::size_t batches, std::uint64_t seed,
                                   std::size_t languages = 0) {
  double worst = 0.0;
  for (const auto& g : gradient_samples(kind, batches, seed, false, languages))
    worst = std::max(worst, std::abs(g.analytic - g.numeric) /
                                std::max(1e-8, std::abs(g.analytic) + std::abs(g.numeric)));
  return worst;
}

// Coordinates failing both |a − n| ≤ atol and the relative bound rtol.
inline std::size_t gradient_mismatches(MapperKind kind, std::size_t batches, std::uint64_t seed,
                                       bool zero_lambda, double rtol, double atol,
                                       std::size_t languages = 0) {
  std::size_t bad = 0;
  for (const auto& g : gradient_samples(kind, batches, seed, zero_lambda, languages)) {
    const double diff = std::abs(g.analytic - g.numeric);
    const double rel = diff / std::max(1e-8, std::abs(g.analytic) + std::abs(g.numeric));
    bad += (diff > atol && rel > rtol) ? 1 : 0;
  }
  return bad;
}

}  // namespace xalign::testing
