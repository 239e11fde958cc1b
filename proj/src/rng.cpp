#include "dtr/rng.hpp"

#include <cmath>

#include "dtr/numeric.hpp"

namespace dtr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 seeded_engine(std::uint64_t master_seed, std::uint64_t stream_id) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  const std::uint64_t mixed = splitmix64(master_seed ^ splitmix64(stream_id));
  std::seed_seq seq{lo(master_seed), hi(master_seed), lo(stream_id), hi(stream_id),
                    lo(mixed),       hi(mixed)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed),
      stream_id_(stream_id),
      engine_(seeded_engine(master_seed, stream_id)) {}

double RngStream::uniform() {
  // (k + 0.5) / 2^53 never hits 0 or 1
  const std::uint64_t k = engine_() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  // Marsaglia polar method
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

int RngStream::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidParameterError("bernoulli: probability outside [0, 1]");
  }
  return uniform() < p ? 1 : 0;
}

RngStream RngStream::derive(std::uint64_t tag) const {
  return RngStream(splitmix64(master_seed_ ^ splitmix64(tag + 0x51ed270b27aa3c2dULL)),
                   splitmix64(stream_id_) ^ tag);
}

}  // namespace dtr
