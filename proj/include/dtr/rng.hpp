#pragma once

#include <cstdint>
#include <random>

namespace dtr {

/// Reproducible random stream keyed by (master_seed, stream_id).
///
/// Each (master_seed, stream_id) pair seeds its own Mersenne Twister through
/// std::seed_seq, so replication r can always use stream_id = r no matter which
/// thread runs it. Uniform and normal draws are produced here rather than by
/// the std distributions, whose output is implementation defined.
///
/// A stream is single-owner state: move it between threads, never share it.
class RngStream {
public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  /// Throws InvalidParameterError unless 0 <= p <= 1.
  int bernoulli(double p);

  /// Independent stream derived from this one's key and `tag`; does not
  /// advance this stream.
  RngStream derive(std::uint64_t tag) const;

private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dtr
