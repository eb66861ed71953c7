#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "xalign/numeric/matrix.h"

namespace xalign {

// Seeded generator with portable derived distributions. std::mt19937_64's
// output sequence is fixed by the standard; the <random> distributions are
// not, so uniform/normal/shuffle are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for a named pipeline stage.
  static Rng substream(std::uint64_t seed, std::string_view name);

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name);

Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);
// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
Matrix random_orthogonal(std::size_t n, Rng& rng);

}  // namespace xalign
