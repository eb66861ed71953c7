#include <cmath>
#include <cstring>

#include <doctest.h>

#include "support/temp_dir.h"
#include "support/text_file.h"
#include "xalign/embed.h"
#include "xalign/error.h"
#include "xalign/numeric/random.h"

using namespace xalign;
using xalign::testing::read_bytes;
using xalign::testing::TempDir;
using xalign::testing::write_text;

namespace {

// Values exactly representable as float32, so the file round-trip is exact.
ContextualEmbeddingSet random_set(std::size_t sentences, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  ContextualEmbeddingSet set{dim, {}};
  for (std::size_t s = 0; s < sentences; ++s) {
    Matrix m(1 + rng.below(6), dim);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < dim; ++j) m(i, j) = static_cast<float>(rng.normal());
    set.sentences.push_back(std::move(m));
  }
  return set;
}

StaticEmbeddingTable table_of(std::vector<std::vector<double>> rows) {
  StaticEmbeddingTable t(rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) t.add("w" + std::to_string(i), rows[i]);
  return t;
}

}  // namespace

TEST_CASE("embedding files round-trip") {
  TempDir dir;
  const auto set = random_set(7, 5, 1);
  write_embeddings(set, dir / "e.ctxe");
  CHECK(load_embeddings(dir / "e.ctxe") == set);

  // Writing the loaded set reproduces the same bytes.
  write_embeddings(load_embeddings(dir / "e.ctxe"), dir / "f.ctxe");
  CHECK(read_bytes(dir / "e.ctxe") == read_bytes(dir / "f.ctxe"));
}

TEST_CASE("embedding loader rejects malformed files") {
  TempDir dir;
  write_embeddings(random_set(3, 4, 2), dir / "e.ctxe");
  std::string bytes = read_bytes(dir / "e.ctxe");

  SUBCASE("wrong magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    write_text(dir / "bad", bad);
    CHECK_THROWS_AS(load_embeddings(dir / "bad"), DataError);
  }
  SUBCASE("declared 3 sentences, payload has 2") {
    ContextualEmbeddingSet two = random_set(3, 4, 2);
    two.sentences.pop_back();
    write_embeddings(two, dir / "two");
    std::string patched = read_bytes(dir / "two");
    const std::uint32_t three = 3;
    std::memcpy(patched.data() + 12, &three, 4);
    write_text(dir / "bad", patched);
    CHECK_THROWS_AS(load_embeddings(dir / "bad"), DataError);
  }
  SUBCASE("truncated payload") {
    write_text(dir / "bad", bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(load_embeddings(dir / "bad"), DataError);
  }
  SUBCASE("trailing bytes") {
    write_text(dir / "bad", bytes + "x");
    CHECK_THROWS_AS(load_embeddings(dir / "bad"), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_embeddings(dir / "nope"), DataError); }
}

TEST_CASE("check_covers matches token counts") {
  const Sentence a{{"x", "y"}, "en"}, b{{"z"}, "en"};
  ContextualEmbeddingSet set{2, {Matrix(2, 2), Matrix(1, 2)}};
  CHECK_NOTHROW(set.check_covers({&a, &b}));
  CHECK_THROWS_AS(set.check_covers({&b, &a}), DataError);
  CHECK_THROWS_AS(set.check_covers({&a}), DataError);
  CHECK(set.token_count() == 3);
}

TEST_CASE("static vectors parse") {
  TempDir dir;
  write_text(dir / "v.txt", "2 2\na 1 0\nb 0 1\n");
  const auto t = load_static_vectors(dir / "v.txt");
  CHECK(t.size() == 2);
  CHECK(*t.find("a") == std::vector<double>{1, 0});
  CHECK(*t.find("b") == std::vector<double>{0, 1});
  CHECK(t.find("c") == nullptr);
}

TEST_CASE("static vectors keep the first duplicate") {
  TempDir dir;
  write_text(dir / "v.txt", "3 2\na 1 0\na 5 5\nb 0 1\n");
  const auto t = load_static_vectors(dir / "v.txt");
  CHECK(t.size() == 2);
  CHECK(*t.find("a") == std::vector<double>{1, 0});
}

TEST_CASE("static vectors reject bad lines") {
  TempDir dir;
  write_text(dir / "v.txt", "1 2\na 1\n");
  CHECK_THROWS_AS(load_static_vectors(dir / "v.txt"), DataError);
  write_text(dir / "v.txt", "1 2\na 1 zz\n");
  CHECK_THROWS_AS(load_static_vectors(dir / "v.txt"), DataError);
  write_text(dir / "v.txt", "1 2\na 1 2 3\n");
  CHECK_THROWS_AS(load_static_vectors(dir / "v.txt"), DataError);
  write_text(dir / "v.txt", "garbage\n");
  CHECK_THROWS_AS(load_static_vectors(dir / "v.txt"), DataError);
}

TEST_CASE("normalize_center_normalize") {
  const double h = std::sqrt(0.5);
  for (const auto& input : {table_of({{1, 0}, {0, 1}}), table_of({{2, 0}, {0, 3}})}) {
    const auto t = normalize_center_normalize(input);
    CHECK(t.at(0)[0] == doctest::Approx(h).epsilon(1e-4));
    CHECK(t.at(0)[1] == doctest::Approx(-h).epsilon(1e-4));
    CHECK(t.at(1)[0] == doctest::Approx(-h).epsilon(1e-4));
    CHECK(t.at(1)[1] == doctest::Approx(h).epsilon(1e-4));
  }
  CHECK_THROWS_AS(normalize_center_normalize(table_of({{1, 0}, {1, 0}})), NumericError);
  CHECK_THROWS_AS(normalize_center_normalize(table_of({{1, 0}})), DataError);
}

TEST_CASE("sentence_augment concatenates word, mean, max, min") {
  Matrix s(2, 2);
  s(0, 0) = 1;
  s(0, 1) = 2;
  s(1, 0) = 3;
  s(1, 1) = 0;
  const std::vector<double> w{1, 2};
  CHECK(sentence_augment(w, s) == std::vector<double>{1, 2, 2, 1, 3, 2, 1, 0});

  Matrix one(1, 2);
  one(0, 0) = 1;
  one(0, 1) = 2;
  CHECK(sentence_augment(w, one) == std::vector<double>{1, 2, 1, 2, 1, 2, 1, 2});

  CHECK_THROWS_AS(sentence_augment(std::vector<double>{1, 2, 3}, s), DataError);
}

TEST_CASE("augmented_static_set builds per-token vectors") {
  const auto t = table_of({{1, 2}, {3, 0}});
  const Sentence s{{"w0", "w1", "unknown"}, "en"};
  const auto set = augmented_static_set(t, {&s});
  CHECK(set.dim == 8);
  REQUIRE(set.sentences[0].rows() == 3);
  const auto v = set.vec(0, 0);
  CHECK(std::vector<double>(v.begin(), v.end()) ==
        std::vector<double>{1, 2, 4.0 / 3, 2.0 / 3, 3, 2, 0, 0});
  const auto plain = augmented_static_set(t, {&s}, false);
  CHECK(plain.dim == 2);
  CHECK(plain.vec(0, 2)[0] == 0.0);
}

TEST_CASE("slice_set") {
  const auto set = random_set(5, 3, 9);
  const auto part = slice_set(set, 1, 3);
  CHECK(part.size() == 2);
  CHECK(part.sentences[0] == set.sentences[1]);
  CHECK_THROWS(slice_set(set, 4, 6));
}
