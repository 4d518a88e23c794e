#pragma once

#include <cstdint>
#include <vector>

namespace kexfam {

// Counter-based random number engine (Philox 4x32, 10 rounds).
//
// A stream is identified by (seed, stream id).  The engine is stateless
// apart from a position counter, so any draw sequence is reproducible from
// those two integers alone and distinct stream ids give statistically
// independent sequences for the same seed.  The 128-bit counter is laid out
// as (block lo, block hi, stream lo, stream hi) and the 64-bit key is the
// seed.  Each block yields four 32-bit words which are consumed in order.
//
// Derived draws consume a fixed number of words:
//   - next_u32: 1 word
//   - next_u64 / uniform01: 2 words
//   - normal: 4 words (two uniforms through Box-Muller, no caching)
// so callers can document and rely on exact draw orders.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform01();

  // Standard normal via Box-Muller: sqrt(-2 log(1-u1)) * cos(2 pi u2).
  // Always consumes exactly two uniforms; no value is cached.
  double normal();

  // Uniform integer in {0, ..., k-1}; consumes one uniform.  k >= 1.
  std::uint64_t uniform_index(std::uint64_t k);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t block_ = 0;
  std::uint32_t buf_[4] = {0, 0, 0, 0};
  int buf_pos_ = 4;  // exhausted; first draw triggers refill
};

// One Philox 4x32-10 block: encrypt `counter` under `key`.
// Exposed for known-answer tests.
void philox4x32_10(const std::uint32_t counter[4], const std::uint32_t key[2],
                   std::uint32_t out[4]);

// First `m` entries of a seeded uniform shuffle of {0,...,n-1}
// (partial Fisher-Yates, m swaps), returned sorted ascending.
// Requires 1 <= m <= n.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m,
                                                    RandomStream& rng);

// Deterministically derives a child seed from a master seed and up to three
// role tags (splitmix64 mixing).  Used by sweeps and experiments so each
// sub-task gets an independent, reproducible seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0);

// Fixed stream ids so different operations sharing one user seed do not
// read from the same sequence.  Composite ids add small offsets to these.
namespace streams {
inline constexpr std::uint64_t kDataset = 0x0100000000ull;
inline constexpr std::uint64_t kBasis = 0x0200000000ull;
inline constexpr std::uint64_t kHmc = 0x0300000000ull;
inline constexpr std::uint64_t kBench = 0x0400000000ull;
}  // namespace streams

}  // namespace kexfam
