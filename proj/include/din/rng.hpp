#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace din {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the private random stream for one (utterance, segment, epoch).
/// Independent of processing order, so parallel extraction is reproducible.
constexpr std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view utt_id,
                                    std::uint64_t segment_index, std::uint64_t epoch = 0) {
  std::uint64_t s = mix64(global_seed);
  s = mix64(s ^ hash_string(utt_id));
  s = mix64(s ^ segment_index);
  return mix64(s ^ (epoch * 0x2545f4914f6cdd1dULL));
}

/// Uniform integer in [0, n], portable (unlike std::uniform_int_distribution).
inline std::uint64_t uniform_upto(Rng& rng, std::uint64_t n) {
  if (n == 0) return 0;
  return rng() % (n + 1);
}

/// Uniform real in [0, 1) with 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller; portable across standard libraries.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace din
