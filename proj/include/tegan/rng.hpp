#pragma once

#include <cstdint>
#include <random>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace tegan {

// splitmix64 finalizer; used to derive independent streams from (seed, index) pairs.
constexpr std::uint64_t mix_seed(std::uint64_t value) noexcept {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) noexcept {
  return mix_seed(mix_seed(mix_seed(seed) ^ stream) ^ index);
}

// Stream identifiers for derive_seed.
namespace streams {
inline constexpr std::uint64_t kTrainTriplets = 0x7472'6169'6e00ULL;
inline constexpr std::uint64_t kTestTriplets = 0x7465'7374'0000ULL;
inline constexpr std::uint64_t kBatch = 0x6261'7463'6800ULL;
inline constexpr std::uint64_t kStepNoise = 0x6e6f'6973'6500ULL;
inline constexpr std::uint64_t kWrongTriplets = 0x7772'6f6e'6700ULL;
inline constexpr std::uint64_t kInit = 0x696e'6974'0000ULL;
inline constexpr std::uint64_t kOracle = 0x6f72'6163'6c65ULL;
inline constexpr std::uint64_t kEval = 0x6576'616c'0000ULL;
inline constexpr std::uint64_t kCli = 0x636c'6900'0000ULL;
}  // namespace streams

inline torch::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
inline double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

inline std::uint64_t uniform_index(std::mt19937_64& engine, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(engine) * static_cast<double>(n)) % n;
}

}  // namespace tegan
