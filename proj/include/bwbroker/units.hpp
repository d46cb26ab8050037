#pragma once

#include <cstdint>
#include <string>

namespace bwbroker {

// Simulation time in integer nanoseconds.
using SimTime = int64_t;

constexpr SimTime kMicrosecond = 1'000;
constexpr SimTime kMillisecond = 1'000'000;
constexpr SimTime kSecond = 1'000'000'000;

// A bandwidth in bits per second, or the explicit "unlimited" sentinel.
// Unlimited is a sentinel rather than a huge number so that sums and
// min() in the allocator cannot overflow.
class Bandwidth {
 public:
  constexpr Bandwidth() : bps_(0) {}

  static constexpr Bandwidth bps(int64_t v) { return Bandwidth(v); }
  static constexpr Bandwidth unlimited() { return Bandwidth(kUnlimited); }
  static constexpr Bandwidth kbps(int64_t v) { return Bandwidth(v * 1'000); }
  static constexpr Bandwidth mbps(int64_t v) { return Bandwidth(v * 1'000'000); }
  static constexpr Bandwidth gbps(int64_t v) { return Bandwidth(v * 1'000'000'000); }

  constexpr bool is_unlimited() const { return bps_ == kUnlimited; }

  // Finite value in bits/s. Must not be called on unlimited.
  constexpr int64_t bits_per_sec() const { return bps_; }

  // min(value, cap), with unlimited treated as "no constraint".
  constexpr int64_t clamped(int64_t cap) const {
    return is_unlimited() ? cap : (bps_ < cap ? bps_ : cap);
  }

  friend constexpr Bandwidth min(Bandwidth a, Bandwidth b) {
    if (a.is_unlimited()) return b;
    if (b.is_unlimited()) return a;
    return Bandwidth(a.bps_ < b.bps_ ? a.bps_ : b.bps_);
  }

  // Comparisons treat unlimited as larger than any finite value.
  friend constexpr bool operator==(Bandwidth a, Bandwidth b) { return a.bps_ == b.bps_; }
  friend constexpr bool operator!=(Bandwidth a, Bandwidth b) { return a.bps_ != b.bps_; }
  friend constexpr bool operator<(Bandwidth a, Bandwidth b) {
    if (a.is_unlimited()) return false;
    if (b.is_unlimited()) return true;
    return a.bps_ < b.bps_;
  }
  friend constexpr bool operator<=(Bandwidth a, Bandwidth b) { return a == b || a < b; }

 private:
  static constexpr int64_t kUnlimited = -1;
  explicit constexpr Bandwidth(int64_t v) : bps_(v) {}
  int64_t bps_;
};

// Parses human bandwidth strings: "6Gb/s", "500Mb/s", "80kb/s", "1000b/s",
// "unlimited", or a bare integer in bits/s. Unit prefixes are decimal and
// case-insensitive. Throws std::invalid_argument on malformed input.
Bandwidth parse_bandwidth(const std::string& s);

// "9.01Gb/s"-style rendering, choosing the largest unit that keeps the
// value >= 1. Unlimited renders as "unlimited".
std::string format_bandwidth(Bandwidth bw);

// Parses byte sizes: "200kB", "1MB", "1500B", bare integer bytes. Decimal units.
int64_t parse_bytes(const std::string& s);

// Parses durations into nanoseconds: "500us", "10ms", "1s", "300s", "2m".
SimTime parse_duration(const std::string& s);

}  // namespace bwbroker
