#ifndef TLB_RANDOM_HPP
#define TLB_RANDOM_HPP

#include <cstdint>
#include <random>

namespace tlb {

/// Random stream used by every stochastic routine in the library.
using Rng = std::mt19937_64;

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Seed for the stream with the given index under a master seed. Depends
/// only on the pair, so replication `i` draws the same numbers no matter
/// which worker thread runs it or in which order.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed,
                                    std::uint64_t stream_index) noexcept {
  return detail::mix64(detail::mix64(master_seed) ^
                       detail::mix64(stream_index + 0x632be59bd9b4e019ULL));
}

inline Rng make_stream(std::uint64_t master_seed, std::uint64_t stream_index) {
  return Rng(derive_seed(master_seed, stream_index));
}

}  // namespace tlb

#endif  // TLB_RANDOM_HPP
