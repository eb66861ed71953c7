#include <bit>
#include <cstring>
#include <fstream>

#include "xalign/align.h"
#include "xalign/error.h"

namespace xalign {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little);

namespace {

constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError(path.string() + ": truncated header");
  return v;
}

struct Envelope {
  std::uint8_t kind = 0;
  std::uint32_t dim = 0;
  std::uint32_t hidden = 0;
  std::vector<double> params;
};

void write_envelope(const char (&magic)[5], const Envelope& env, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(magic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint8_t>(out, env.kind);
  put<std::uint32_t>(out, env.dim);
  put<std::uint32_t>(out, env.hidden);
  put<std::uint64_t>(out, env.params.size());
  out.write(reinterpret_cast<const char*>(env.params.data()),
            static_cast<std::streamsize>(env.params.size() * sizeof(double)));
  if (!out) throw DataError("write failed: " + path.string());
}

Envelope read_envelope(const char (&magic)[5], const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw DataError(path.string() + ": magic mismatch (expected " + std::string(magic) + ")");
  if (get<std::uint32_t>(in, path) != kVersion)
    throw DataError(path.string() + ": unsupported version");
  Envelope env;
  env.kind = get<std::uint8_t>(in, path);
  env.dim = get<std::uint32_t>(in, path);
  env.hidden = get<std::uint32_t>(in, path);
  const auto count = get<std::uint64_t>(in, path);
  env.params.resize(count);
  if (!in.read(reinterpret_cast<char*>(env.params.data()),
               static_cast<std::streamsize>(count * sizeof(double))))
    throw DataError(path.string() + ": truncated parameters");
  return env;
}

std::size_t base_params(MapperKind kind, std::size_t dim, std::size_t hidden) {
  return kind == MapperKind::kLinear ? dim * dim + dim : 2 * hidden * dim + hidden + dim;
}

}  // namespace

void write_mapper(const Mapper& mapper, const fs::path& path) {
  write_envelope("CMAP",
                 {static_cast<std::uint8_t>(mapper.kind()),
                  static_cast<std::uint32_t>(mapper.dim()),
                  static_cast<std::uint32_t>(mapper.hidden_dim()), mapper.params()},
                 path);
}

Mapper load_mapper(const fs::path& path) {
  Envelope env = read_envelope("CMAP", path);
  if (env.kind > 1) throw DataError(path.string() + ": unknown mapper kind");
  const auto kind = static_cast<MapperKind>(env.kind);
  if (env.dim == 0 || (kind == MapperKind::kResidualMlp && env.hidden == 0))
    throw DataError(path.string() + ": empty mapper shape");
  // Per-language biases follow the base parameters, one block of `hidden` each.
  const std::size_t base = base_params(kind, env.dim, env.hidden);
  const std::size_t extra = env.params.size() >= base ? env.params.size() - base : 1;
  const std::size_t block = kind == MapperKind::kLinear ? 0 : env.hidden;
  if (env.params.size() < base || (extra > 0 && (block == 0 || extra % block != 0)))
    throw DataError(path.string() + ": parameter count does not match mapper shape");
  Mapper m = Mapper::identity(kind, env.dim, env.hidden, 0, block ? extra / block : 0);
  m.params() = std::move(env.params);
  return m;
}

void write_rotation(const RotationMap& rotation, const fs::path& path) {
  const auto data = rotation.w.data();
  write_envelope("CROT",
                 {0, static_cast<std::uint32_t>(rotation.dim()), 0,
                  std::vector<double>(data.begin(), data.end())},
                 path);
}

RotationMap load_rotation(const fs::path& path) {
  Envelope env = read_envelope("CROT", path);
  if (env.params.size() != static_cast<std::size_t>(env.dim) * env.dim)
    throw DataError(path.string() + ": parameter count does not match rotation shape");
  return {Matrix(env.dim, env.dim, std::move(env.params))};
}

}  // namespace xalign
