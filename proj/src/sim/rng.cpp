#include "bwbroker/sim/rng.hpp"

namespace bwbroker::sim {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed, uint64_t stream)
    : base_(splitmix64(seed ^ splitmix64(stream + 0x51ED2701A9B4E22Full))) {}

uint64_t Rng::next_u64() {
  return splitmix64(base_ + (++counter_) * 0x9E3779B97F4A7C15ull);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint32_t Rng::uniform_int(uint32_t n) {
  return static_cast<uint32_t>(next_u64() % n);
}

}  // namespace bwbroker::sim
