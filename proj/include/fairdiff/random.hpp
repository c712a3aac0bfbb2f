#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace fairdiff {

/// Philox4x32-10 block cipher (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Stage tags mixed into the stream key. Values are part of the reproducibility
/// contract; never renumber.
enum class StreamTag : std::uint32_t {
  population = 1,
  sample_init = 2,
  sample_step = 3,
  calib_init = 4,
  calib_step = 5,
  inject = 6,
  correct_step = 7,
  probe_inject = 8,
  probe_step = 9,
  dm_loss = 10,
  gmm_init = 11,
  gmm_sample = 12,
  test = 99,
};

/// Counter-based variate stream addressed by (seed, tag, index, substream).
///
/// The key is derived from (seed, tag); the 128-bit counter holds
/// (block, substream, index_lo, index_hi). Two streams with different
/// addresses never share a counter, so a draw depends only on its address and
/// not on the order in which work was scheduled.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, StreamTag tag, std::uint64_t index,
                std::uint32_t substream = 0);

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  void normals(std::span<double> out);
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint32_t next_word();
  std::uint64_t next_u64();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fairdiff
