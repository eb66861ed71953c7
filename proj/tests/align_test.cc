#include <cmath>

#include <doctest.h>

#include "support/grad_harness.h"
#include "support/temp_dir.h"
#include "support/text_file.h"
#include "xalign/align.h"
#include "xalign/error.h"
#include "xalign/numeric/random.h"
#include "xalign/synth.h"

using namespace xalign;
using xalign::testing::TempDir;

namespace {

Matrix rotation_2d(double angle) {
  Matrix q(2, 2);
  q(0, 0) = std::cos(angle);
  q(0, 1) = -std::sin(angle);
  q(1, 0) = std::sin(angle);
  q(1, 1) = std::cos(angle);
  return q;
}

// Rows of the result are Q·xₖ.
Matrix rotate_rows(const Matrix& q, const Matrix& x) { return multiply(x, q.transposed()); }

double relative_error(const Matrix& a, const Matrix& b) {
  return frobenius_norm(subtract(a, b)) / frobenius_norm(b);
}

Matrix row_matrix(std::vector<std::vector<double>> rows) {
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

// Corpus of one-token sentences linked 0-0, with the given vectors.
struct PairedSets {
  ParallelCorpus corpus;
  ContextualEmbeddingSet src, tgt;
};

PairedSets one_token_sets(const Matrix& x, const Matrix& y) {
  PairedSets p{{"en", "de", {}}, {x.cols(), {}}, {y.cols(), {}}};
  for (std::size_t k = 0; k < x.rows(); ++k) {
    p.corpus.entries.push_back(
        {Sentence{{"s"}, "en"}, Sentence{{"t"}, "de"}, WordPairSet({{0, 0}})});
    Matrix a(1, x.cols()), b(1, y.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) a(0, j) = x(k, j);
    for (std::size_t j = 0; j < y.cols(); ++j) b(0, j) = y(k, j);
    p.src.sentences.push_back(a);
    p.tgt.sentences.push_back(b);
  }
  return p;
}

}  // namespace

TEST_CASE("procrustes on identical full-rank data gives the identity") {
  Rng rng(1);
  const Matrix x = random_gaussian(40, 6, rng);
  const auto r = procrustes_fit(x, x);
  CHECK(frobenius_norm(subtract(r.w, Matrix::identity(6))) < 1e-8);
}

TEST_CASE("procrustes recovers a 90 degree rotation") {
  Rng rng(2);
  const Matrix q = rotation_2d(M_PI / 2);
  const Matrix x = random_gaussian(50, 2, rng);
  const auto r = procrustes_fit(x, rotate_rows(q, x));
  CHECK(frobenius_norm(subtract(r.w, q)) < 1e-8);
}

TEST_CASE("procrustes recovers Q under noise") {
  Rng rng(3);
  const Matrix q = random_orthogonal(32, rng);
  const Matrix x = random_gaussian(500, 32, rng);
  Matrix y = rotate_rows(q, x);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += 0.01 * rng.normal();
  const auto r = procrustes_fit(x, y);
  CHECK(relative_error(r.w, q) < 0.05);
  CHECK(orthonormality_error(r.w) < 1e-10);
}

TEST_CASE("procrustes fit minimizes the objective over random rotations") {
  Rng rng(4);
  const Matrix x = random_gaussian(30, 4, rng), y = random_gaussian(30, 4, rng);
  const auto r = procrustes_fit(x, y);
  const double best = procrustes_objective(r.w, x, y);
  for (int i = 0; i < 200; ++i) CHECK(procrustes_objective(random_orthogonal(4, rng), x, y) >= best - 1e-9);
}

TEST_CASE("procrustes preconditions") {
  CHECK_THROWS_AS(procrustes_fit(Matrix(3, 2), Matrix(3, 3)), DataError);
  CHECK_THROWS_AS(procrustes_fit(Matrix(3, 2), Matrix(2, 2)), DataError);
  CHECK_THROWS_AS(procrustes_fit(Matrix(0, 2), Matrix(0, 2)), DataError);
}

TEST_CASE("rotation_apply") {
  ContextualEmbeddingSet set{2, {row_matrix({{1, 0}, {0.3, -2}})}};
  CHECK(rotation_apply(RotationMap{Matrix::identity(2)}, set) == set);

  const auto turned = rotation_apply(RotationMap{rotation_2d(M_PI / 2)}, set);
  CHECK(turned.vec(0, 0)[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(turned.vec(0, 0)[1] == doctest::Approx(1.0));

  Rng rng(5);
  const RotationMap w{random_orthogonal(2, rng)};
  const auto moved = rotation_apply(w, set);
  for (std::size_t t = 0; t < 2; ++t) CHECK(std::abs(norm(moved.vec(0, t)) - norm(set.vec(0, t))) < 1e-9);

  CHECK_THROWS_AS(rotation_apply(RotationMap{Matrix::identity(3)}, set), DataError);
}

TEST_CASE("sentence_rotation_fit") {
  Rng rng(6);
  SUBCASE("identical sets") {
    const Matrix x = random_gaussian(10, 3, rng);
    const auto p = one_token_sets(x, x);
    const auto r = sentence_rotation_fit(p.src, p.tgt, p.corpus);
    CHECK(frobenius_norm(subtract(r.w, Matrix::identity(3))) < 1e-8);
  }
  SUBCASE("rotated sentence means") {
    const Matrix q = random_orthogonal(3, rng);
    const Matrix x = random_gaussian(10, 3, rng);
    const auto p = one_token_sets(x, rotate_rows(q, x));
    const auto r = sentence_rotation_fit(p.src, p.tgt, p.corpus);
    CHECK(frobenius_norm(subtract(r.w, q)) < 1e-8);
  }
  SUBCASE("one sentence in 2-D is rank deficient but orthogonal") {
    const Matrix x = row_matrix({{1, 0}});
    const Matrix y = row_matrix({{0, 2}});
    const auto p = one_token_sets(x, y);
    const auto r = sentence_rotation_fit(p.src, p.tgt, p.corpus);
    CHECK(orthonormality_error(r.w) < 1e-12);
    // Closest orthogonal map sends (1,0) onto the direction of (0,2).
    const auto mapped = matvec(r.w, std::vector<double>{1, 0});
    CHECK(mapped[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mapped[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fresh mappers are the identity") {
  Rng rng(7);
  const std::vector<double> v{0.3, -1.2, 2.5};
  for (auto kind : {MapperKind::kLinear, MapperKind::kResidualMlp}) {
    const auto m = Mapper::identity(kind, 3, 5, 11);
    CHECK(m.forward(v) == v);
  }
}

TEST_CASE("linear mapper scaling") {
  auto m = Mapper::identity(MapperKind::kLinear, 2);
  m.params()[0] = 2;
  m.params()[3] = 2;
  CHECK(m.forward(std::vector<double>{1, 1}) == std::vector<double>{2, 2});
}

TEST_CASE("residual mlp with zero second layer adds b2") {
  auto m = Mapper::identity(MapperKind::kResidualMlp, 2, 3, 1);
  // Layout [W1 (3x2), b1 (3), W2 (2x3), b2 (2)]
  m.params()[6 + 3 + 6 + 0] = 1.0;
  const std::vector<double> v{0.25, -4};
  const auto y = m.forward(v);
  CHECK(y[0] == 1.25);
  CHECK(y[1] == -4);
}

TEST_CASE("mapper kind names") {
  CHECK(to_string(MapperKind::kResidualMlp) == "residual-mlp");
  CHECK(mapper_kind_from_string("linear") == MapperKind::kLinear);
  CHECK_THROWS_AS(mapper_kind_from_string("conv"), UsageError);
}

TEST_CASE("alignment loss values") {
  const auto m = Mapper::identity(MapperKind::kLinear, 2);
  SUBCASE("identical vectors give zero") {
    const Matrix s = row_matrix({{1, 2}, {3, 4}});
    const WordPairSet pairs({{0, 0}, {1, 1}});
    const SentencePairView view{&s, &s, &s, &pairs};
    const auto v = alignment_loss(m, std::span(&view, 1), 1.0);
    CHECK(v.alignment == 0.0);
    CHECK(v.anchor == 0.0);
  }
  SUBCASE("one pair at unit distance") {
    const Matrix s = row_matrix({{1, 0}});
    const Matrix t = row_matrix({{0, 0}});
    const WordPairSet pairs({{0, 0}});
    const SentencePairView view{&s, &t, &t, &pairs};
    const auto v = alignment_loss(m, std::span(&view, 1), 1.0);
    CHECK(v.alignment == 1.0);
    CHECK(v.anchor == 0.0);
    CHECK(v.total == 1.0);
  }
  SUBCASE("empty batch") {
    const Matrix s = row_matrix({{1, 0}});
    const WordPairSet pairs;
    const SentencePairView view{&s, &s, &s, &pairs};
    CHECK_THROWS_AS(alignment_loss(m, std::span(&view, 1), 1.0), DataError);
    CHECK(alignment_loss_allow_empty(m, std::span(&view, 1), 1.0).alignment == 0.0);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  for (auto kind : {MapperKind::kLinear, MapperKind::kResidualMlp}) {
    CAPTURE(to_string(kind));
    // Coordinates near zero sit at the finite-difference roundoff floor
    // (about eps·|f|/h), so each coordinate passes on either bound.
    for (std::uint64_t seed : {97u, 98u, 99u})
      CHECK(testing::gradient_mismatches(kind, 100, seed, false, 1e-5, 1e-9) == 0);
    CHECK(testing::gradient_mismatches(kind, 40, 96, true, 1e-5, 1e-9) == 0);
  }
}

TEST_CASE("analytic gradients match finite differences with language codes") {
  for (std::uint64_t seed : {97u, 98u, 99u})
    CHECK(testing::gradient_mismatches(MapperKind::kResidualMlp, 100, seed, false, 1e-5, 1e-9,
                                       3) == 0);
}

TEST_CASE("language codes") {
  const std::vector<double> v{0.3, -0.2, 0.9};
  Mapper m = Mapper::identity(MapperKind::kResidualMlp, 3, 4, 11, 3);
  CHECK(m.languages() == 3);
  CHECK(m.params().size() == 4 * 3 + 4 + 3 * 4 + 3 + 3 * 4);
  for (std::size_t lang = 0; lang < 3; ++lang) CHECK(m.forward(v, lang) == v);
  CHECK_THROWS_AS(m.forward(v, 3), DataError);
  CHECK_THROWS_AS(Mapper::identity(MapperKind::kLinear, 3, 0, 0, 2), UsageError);

  // Only the bias block of the requested language takes effect.
  Rng rng(4);
  for (double& p : m.params()) p = rng.normal();
  const std::size_t c0 = 4 * 3 + 4 + 3 * 4 + 3;
  const auto before1 = m.forward(v, 1);
  m.params()[c0 + 4 * 2] += 1.0;
  CHECK(m.forward(v, 1) == before1);
  CHECK(m.forward(v, 2) != m.forward(v, 1));

  // A language-agnostic mapper ignores the code.
  const Mapper plain = Mapper::identity(MapperKind::kResidualMlp, 3, 4, 11);
  CHECK(plain.forward(v, 5) == plain.forward(v, 0));
}

TEST_CASE("align config validation") {
  AlignConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = -1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = AlignConfig{};
  cfg.pairs_per_language = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = AlignConfig{};
  cfg.warmup_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("warmup and step counts") {
  CHECK(warmup_steps_for(100, 0.1) == 10);
  CHECK(warmup_steps_for(15, 0.1) == 2);
  CHECK(warmup_steps_for(0, 0.1) == 0);
}

namespace {

SynthBundle small_bundle(std::uint64_t seed, Distortion mode = Distortion::kOrthogonal) {
  SynthConfig cfg;
  cfg.vocab_size = 50;
  cfg.corpus_size = 40;
  cfg.min_length = 3;
  cfg.max_length = 6;
  cfg.dim = 6;
  cfg.distortion = mode;
  cfg.seed = seed;
  return generate(cfg);
}

}  // namespace

TEST_CASE("finetune with zero epochs returns the mapper unchanged") {
  const auto b = small_bundle(1);
  const TrainingCorpus tc{&b.corpus, &b.src_set, &b.tgt_set};
  AlignConfig cfg;
  cfg.epochs = 0;
  const auto init = Mapper::identity(MapperKind::kResidualMlp, 6, 6, 3);
  const auto r = finetune_align(init, std::span(&tc, 1), cfg);
  CHECK(r.mapper == init);
  CHECK(r.trace.rows.empty());
}

TEST_CASE("finetune step count, warmup and determinism") {
  const auto b = small_bundle(2);
  const TrainingCorpus tc{&b.corpus, &b.src_set, &b.tgt_set};
  AlignConfig cfg;
  cfg.epochs = 2;
  cfg.base_lr = 1e-3;
  cfg.seed = 5;
  CHECK(finetune_total_steps(std::span(&tc, 1), cfg) == 40);
  const auto init = Mapper::identity(MapperKind::kLinear, 6);
  const auto r1 = finetune_align(init, std::span(&tc, 1), cfg);
  const auto r2 = finetune_align(init, std::span(&tc, 1), cfg);
  CHECK(r1.mapper == r2.mapper);
  REQUIRE(r1.trace.rows.size() == 40);
  CHECK(r1.trace.rows[0].lr == doctest::Approx(1e-3 / 4));
  CHECK(r1.trace.rows[3].lr == 1e-3);
  CHECK(r1.trace.rows[39].lr == 1e-3);
  CHECK(r1.trace.rows[0].step == 1);
  // Training lowers the full-corpus objective.
  std::vector<SentencePairView> views;
  for (std::size_t k = 0; k < b.corpus.size(); ++k)
    views.push_back({&b.src_set.sentences[k], &b.tgt_set.sentences[k], &b.tgt_set.sentences[k],
                     &b.corpus.entries[k].pairs});
  CHECK(alignment_loss(r1.mapper, views, 1.0).total < alignment_loss(init, views, 1.0).total);
}

TEST_CASE("finetune halves the smoothed loss on the orthogonal benchmark") {
  SynthConfig sc;
  sc.vocab_size = 300;
  sc.corpus_size = 400;
  sc.dim = 16;
  sc.seed = 9;
  const auto b = generate(sc);
  const TrainingCorpus tc{&b.corpus, &b.src_set, &b.tgt_set};
  AlignConfig cfg;
  cfg.lambda = 1.0;
  cfg.base_lr = 1e-2;
  cfg.epochs = 2;
  struct Variant {
    Mapper init;
    const char* name;
  };
  const Variant variants[] = {{Mapper::identity(MapperKind::kLinear, 16), "linear"},
                              {Mapper::identity(MapperKind::kResidualMlp, 16, 32, 2), "mlp"},
                              {Mapper::identity(MapperKind::kResidualMlp, 16, 32, 2, 2),
                               "mlp with language codes"}};
  for (const auto& v : variants) {
    CAPTURE(v.name);
    const auto r = finetune_align(v.init, std::span(&tc, 1), cfg);
    const auto& rows = r.trace.rows;
    REQUIRE(rows.size() >= 20);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      first += rows[i].total / 10;
      last += rows[rows.size() - 10 + i].total / 10;
    }
    CHECK(last <= 0.5 * first);
    for (const auto& row : rows) CHECK(row.total == row.alignment + cfg.lambda * row.anchor);
  }
}

TEST_CASE("finetune with a huge anchor weight keeps target vectors in place") {
  const auto b = small_bundle(3, Distortion::kOrthogonalTanh);
  const TrainingCorpus tc{&b.corpus, &b.src_set, &b.tgt_set};
  AlignConfig cfg;
  cfg.lambda = 1e6;
  cfg.base_lr = 1e-3;
  cfg.epochs = 3;
  const auto r = finetune_align(Mapper::identity(MapperKind::kResidualMlp, 6, 6, 1),
                                std::span(&tc, 1), cfg);
  double drift = 0.0;
  const auto mapped = r.mapper.apply(b.tgt_set);
  for (std::size_t s = 0; s < b.tgt_set.size(); ++s)
    for (std::size_t t = 0; t < b.tgt_set.sentences[s].rows(); ++t)
      drift = std::max(drift, std::sqrt(squared_distance(mapped.vec(s, t), b.tgt_set.vec(s, t))));
  CHECK(drift < 1e-2);
}

TEST_CASE("multilingual corpora must share the target language") {
  const auto a = small_bundle(4), b = small_bundle(5);
  ParallelCorpus other = b.corpus;
  other.tgt_language = "fr";
  const TrainingCorpus tcs[] = {{&a.corpus, &a.src_set, &a.tgt_set},
                                {&other, &b.src_set, &b.tgt_set}};
  CHECK_THROWS_AS(finetune_align(Mapper::identity(MapperKind::kLinear, 6), tcs, AlignConfig{}),
                  DataError);
}

TEST_CASE("multilingual step count follows the largest corpus") {
  const auto a = small_bundle(4);
  auto big = small_bundle(6);
  const auto copy = big;
  big.corpus.entries.insert(big.corpus.entries.end(), copy.corpus.entries.begin(),
                            copy.corpus.entries.end());
  big.src_set.sentences.insert(big.src_set.sentences.end(), copy.src_set.sentences.begin(),
                               copy.src_set.sentences.end());
  big.tgt_set.sentences.insert(big.tgt_set.sentences.end(), copy.tgt_set.sentences.begin(),
                               copy.tgt_set.sentences.end());
  const TrainingCorpus tcs[] = {{&a.corpus, &a.src_set, &a.tgt_set},
                                {&big.corpus, &big.src_set, &big.tgt_set}};
  AlignConfig cfg;
  CHECK(finetune_total_steps(tcs, cfg) == 40);
  cfg.epochs = 1;
  const auto r = finetune_align(Mapper::identity(MapperKind::kLinear, 6), tcs, cfg);
  CHECK(r.trace.rows.size() == 40);
}

TEST_CASE("each corpus trains its own source language code") {
  const auto a = small_bundle(4), b = small_bundle(5);
  const TrainingCorpus tcs[] = {{&a.corpus, &a.src_set, &a.tgt_set},
                                {&b.corpus, &b.src_set, &b.tgt_set}};
  AlignConfig cfg;
  cfg.base_lr = 1e-2;
  CHECK_THROWS_AS(
      finetune_align(Mapper::identity(MapperKind::kResidualMlp, 6, 4, 1, 2), tcs, cfg),
      DataError);
  const auto r = finetune_align(Mapper::identity(MapperKind::kResidualMlp, 6, 4, 1, 3), tcs, cfg);
  const auto& p = r.mapper.params();
  const std::size_t c0 = 4 * 6 + 4 + 6 * 4 + 6;
  for (std::size_t lang = 0; lang < 3; ++lang) {
    CAPTURE(lang);
    double moved = 0.0;
    for (std::size_t k = 0; k < 4; ++k) moved += std::abs(p[c0 + lang * 4 + k]);
    CHECK(moved > 0.0);
  }
  CHECK(!std::equal(p.begin() + c0 + 4, p.begin() + c0 + 8, p.begin() + c0 + 8));
}

TEST_CASE("trace csv header") {
  TempDir dir;
  TrainTrace t;
  t.rows.push_back({1, 0.5, 1.0, 2.0, 3.0});
  t.write_csv(dir / "trace.csv");
  const auto text = testing::read_bytes(dir / "trace.csv");
  CHECK(text.rfind("step,lr,L,R,total\n", 0) == 0);
}

TEST_CASE("mapper and rotation serialization round-trip") {
  TempDir dir;
  Rng rng(8);
  for (auto kind : {MapperKind::kLinear, MapperKind::kResidualMlp}) {
    const auto m = testing::random_mapper(kind, 4, 3, rng);
    write_mapper(m, dir / "m.cmap");
    CHECK(load_mapper(dir / "m.cmap") == m);
  }
  const auto coded = testing::random_mapper(MapperKind::kResidualMlp, 4, 3, rng, 2);
  write_mapper(coded, dir / "coded.cmap");
  const Mapper loaded = load_mapper(dir / "coded.cmap");
  CHECK(loaded.languages() == 2);
  CHECK(loaded == coded);
  const RotationMap r{random_orthogonal(5, rng)};
  write_rotation(r, dir / "r.crot");
  CHECK(load_rotation(dir / "r.crot").w == r.w);

  // Kinds are not interchangeable.
  CHECK_THROWS_AS(load_mapper(dir / "r.crot"), DataError);
  testing::write_text(dir / "junk", "CMAP");
  CHECK_THROWS_AS(load_mapper(dir / "junk"), DataError);
}
