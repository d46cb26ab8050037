#pragma once

#include <cstdint>

namespace bwbroker::sim {

uint64_t splitmix64(uint64_t x);

// Counter-based generator: output i depends only on (seed, stream, i), so
// adding or removing one traffic source never perturbs the draws of another.
class Rng {
 public:
  Rng() : Rng(1, 0) {}
  Rng(uint64_t seed, uint64_t stream);

  uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  uint32_t uniform_int(uint32_t n);      // [0, n), n > 0

 private:
  uint64_t base_;
  uint64_t counter_ = 0;
};

}  // namespace bwbroker::sim
