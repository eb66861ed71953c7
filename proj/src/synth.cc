#include "xalign/synth.h"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "xalign/error.h"
#include "xalign/numeric/random.h"

namespace xalign {

std::string to_string(Distortion d) {
  return d == Distortion::kOrthogonal ? "orthogonal" : "orthogonal+tanh";
}

Distortion distortion_from_string(const std::string& name) {
  if (name == "orthogonal") return Distortion::kOrthogonal;
  if (name == "orthogonal+tanh" || name == "tanh" || name == "nonlinear")
    return Distortion::kOrthogonalTanh;
  throw UsageError("unknown distortion '" + name + "'");
}

void SynthConfig::validate() const {
  if (vocab_size < 2) throw UsageError("synth: vocab_size must be >= 2");
  if (corpus_size < 1) throw UsageError("synth: corpus_size must be >= 1");
  if (min_length < 1 || max_length < min_length)
    throw UsageError("synth: length range must satisfy 1 <= min <= max");
  if (dim < 2) throw UsageError("synth: dim must be >= 2");
  if (!(context_mix >= 0.0 && context_mix < 1.0))
    throw UsageError("synth: context_mix must lie in [0, 1)");
  if (!(noise >= 0.0)) throw UsageError("synth: noise must be >= 0");
  if (!(swap_prob >= 0.0 && swap_prob <= 1.0))
    throw UsageError("synth: swap_prob must lie in [0, 1]");
}

namespace {

void normalize(std::span<double> v) {
  const double n = norm(v);
  if (n == 0.0) throw NumericError("synth: zero-norm vector");
  for (double& x : v) x /= n;
}

// normalize(b[w_i] + α·mean(b[w_{i−1}], b[w_{i+1}])) for every position.
Matrix contextualize(const std::vector<std::size_t>& types, const Matrix& base, double alpha) {
  const std::size_t len = types.size();
  const std::size_t dim = base.cols();
  Matrix out(len, dim);
  for (std::size_t i = 0; i < len; ++i) {
    auto dst = out.row(i);
    auto self = base.row(types[i]);
    std::copy(self.begin(), self.end(), dst.begin());
    std::size_t neighbors = 0;
    std::vector<double> ctx(dim, 0.0);
    if (i > 0) {
      auto v = base.row(types[i - 1]);
      for (std::size_t d = 0; d < dim; ++d) ctx[d] += v[d];
      ++neighbors;
    }
    if (i + 1 < len) {
      auto v = base.row(types[i + 1]);
      for (std::size_t d = 0; d < dim; ++d) ctx[d] += v[d];
      ++neighbors;
    }
    if (neighbors > 0) {
      const double w = alpha / static_cast<double>(neighbors);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += w * ctx[d];
    }
    normalize(dst);
  }
  return out;
}

}  // namespace

SynthBundle generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, "synth"));
  const std::size_t dim = cfg.dim;
  const std::size_t vocab = cfg.vocab_size;

  Matrix base(vocab, dim);
  for (std::size_t w = 0; w < vocab; ++w) {
    for (double& x : base.row(w)) x = rng.normal();
    normalize(base.row(w));
  }

  std::vector<std::size_t> lexicon(vocab);
  std::iota(lexicon.begin(), lexicon.end(), std::size_t{0});
  rng.shuffle(lexicon);

  SynthBundle bundle;
  bundle.gold.q = {random_orthogonal(dim, rng)};
  bundle.gold.nonlinear = cfg.distortion == Distortion::kOrthogonalTanh;

  // Target base vectors, indexed by source type.
  Matrix tgt_base(vocab, dim);
  std::vector<double> pre(dim);
  for (std::size_t w = 0; w < vocab; ++w) {
    auto b = base.row(w);
    for (std::size_t d = 0; d < dim; ++d)
      pre[d] = bundle.gold.nonlinear ? std::tanh(kTanhGain * b[d]) : b[d];
    auto mapped = matvec(bundle.gold.q.w, pre);
    auto dst = tgt_base.row(w);
    for (std::size_t d = 0; d < dim; ++d) dst[d] = mapped[d] + cfg.noise * rng.normal();
  }

  bundle.corpus.src_language = "src";
  bundle.corpus.tgt_language = "tgt";
  bundle.src_set.dim = dim;
  bundle.tgt_set.dim = dim;
  const std::size_t span = cfg.max_length - cfg.min_length + 1;
  for (std::size_t k = 0; k < cfg.corpus_size; ++k) {
    const std::size_t len = cfg.min_length + static_cast<std::size_t>(rng.below(span));
    std::vector<std::size_t> src_types(len);
    for (auto& t : src_types) t = static_cast<std::size_t>(rng.below(vocab));

    // order[j] = source position translated at target position j
    std::vector<std::size_t> order(len);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.swap_prob > 0.0) {
      for (std::size_t j = 0; j + 1 < len; ++j) {
        if (rng.uniform() < cfg.swap_prob) {
          std::swap(order[j], order[j + 1]);
          ++j;
        }
      }
    }
    std::vector<std::size_t> tgt_types(len);
    Sentence src{{}, "src"}, tgt{{}, "tgt"};
    std::vector<WordPair> pairs;
    for (std::size_t i = 0; i < len; ++i) src.tokens.push_back("s" + std::to_string(src_types[i]));
    for (std::size_t j = 0; j < len; ++j) {
      tgt_types[j] = src_types[order[j]];
      tgt.tokens.push_back("t" + std::to_string(lexicon[tgt_types[j]]));
      pairs.push_back({order[j], j});
    }
    bundle.corpus.entries.push_back({std::move(src), std::move(tgt), WordPairSet(std::move(pairs))});
    bundle.src_set.sentences.push_back(contextualize(src_types, base, cfg.context_mix));
    bundle.tgt_set.sentences.push_back(contextualize(tgt_types, tgt_base, cfg.context_mix));
  }
  return bundle;
}

void write_bundle(const SynthBundle& bundle, const SynthConfig& cfg,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_parallel_corpus(bundle.corpus, dir / "src.txt", dir / "tgt.txt", dir / "pairs.txt");
  write_embeddings(bundle.src_set, dir / "src.ctxe");
  write_embeddings(bundle.tgt_set, dir / "tgt.ctxe");
  write_rotation(bundle.gold.q, dir / "gold_map.crot");

  nlohmann::ordered_json j;
  j["mode"] = to_string(cfg.distortion);
  j["noise"] = cfg.noise;
  j["context_mix"] = cfg.context_mix;
  j["seed"] = cfg.seed;
  j["vocab_size"] = cfg.vocab_size;
  j["corpus_size"] = cfg.corpus_size;
  j["length_range"] = {cfg.min_length, cfg.max_length};
  j["dim"] = cfg.dim;
  j["swap_prob"] = cfg.swap_prob;
  j["tanh_gain"] = kTanhGain;
  std::ofstream out(dir / "gold_map.json", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "gold_map.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace xalign
