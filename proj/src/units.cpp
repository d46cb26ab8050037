#include "bwbroker/units.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace bwbroker {

namespace {

// Splits "12.5Gb/s" into (12.5, "gb/s"). Throws if no leading number.
std::pair<double, std::string> split_number_suffix(const std::string& s) {
  size_t pos = 0;
  while (pos < s.size() &&
         (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.' ||
          s[pos] == '+' || s[pos] == 'e' || s[pos] == 'E' ||
          (s[pos] == '-' && pos == 0))) {
    ++pos;
  }
  // Undo a trailing exponent marker swallowed by the scan ("1e" of "1e3" is
  // fine, but "200k" must not treat 'e' of a unit as an exponent).
  if (pos == 0) throw std::invalid_argument("expected a number: '" + s + "'");
  std::string num = s.substr(0, pos);
  std::string suffix = s.substr(pos);
  size_t consumed = 0;
  double value = std::stod(num, &consumed);
  if (consumed != num.size()) {
    suffix = num.substr(consumed) + suffix;
    num = num.substr(0, consumed);
  }
  std::transform(suffix.begin(), suffix.end(), suffix.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  // Trim whitespace around the unit.
  while (!suffix.empty() && suffix.front() == ' ') suffix.erase(suffix.begin());
  while (!suffix.empty() && suffix.back() == ' ') suffix.pop_back();
  return {value, suffix};
}

}  // namespace

Bandwidth parse_bandwidth(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "unlimited" || lower == "inf" || lower == "none") {
    return Bandwidth::unlimited();
  }
  auto [value, unit] = split_number_suffix(s);
  double scale;
  if (unit.empty() || unit == "b/s" || unit == "bps") {
    scale = 1.0;
  } else if (unit == "kb/s" || unit == "kbps") {
    scale = 1e3;
  } else if (unit == "mb/s" || unit == "mbps") {
    scale = 1e6;
  } else if (unit == "gb/s" || unit == "gbps") {
    scale = 1e9;
  } else if (unit == "tb/s" || unit == "tbps") {
    scale = 1e12;
  } else {
    throw std::invalid_argument("unknown bandwidth unit in '" + s + "'");
  }
  double bps = value * scale;
  if (bps < 0) throw std::invalid_argument("negative bandwidth: '" + s + "'");
  return Bandwidth::bps(static_cast<int64_t>(std::llround(bps)));
}

std::string format_bandwidth(Bandwidth bw) {
  if (bw.is_unlimited()) return "unlimited";
  double v = static_cast<double>(bw.bits_per_sec());
  const char* unit = "b/s";
  if (v >= 1e9) {
    v /= 1e9;
    unit = "Gb/s";
  } else if (v >= 1e6) {
    v /= 1e6;
    unit = "Mb/s";
  } else if (v >= 1e3) {
    v /= 1e3;
    unit = "kb/s";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g%s", v, unit);
  return buf;
}

int64_t parse_bytes(const std::string& s) {
  auto [value, unit] = split_number_suffix(s);
  double scale;
  if (unit.empty() || unit == "b") {
    scale = 1.0;
  } else if (unit == "kb") {
    scale = 1e3;
  } else if (unit == "mb") {
    scale = 1e6;
  } else if (unit == "gb") {
    scale = 1e9;
  } else {
    throw std::invalid_argument("unknown byte unit in '" + s + "'");
  }
  double bytes = value * scale;
  if (bytes < 0) throw std::invalid_argument("negative size: '" + s + "'");
  return static_cast<int64_t>(std::llround(bytes));
}

SimTime parse_duration(const std::string& s) {
  auto [value, unit] = split_number_suffix(s);
  double scale;
  if (unit == "ns") {
    scale = 1.0;
  } else if (unit == "us") {
    scale = 1e3;
  } else if (unit == "ms") {
    scale = 1e6;
  } else if (unit.empty() || unit == "s") {
    scale = 1e9;
  } else if (unit == "m" || unit == "min") {
    scale = 60e9;
  } else {
    throw std::invalid_argument("unknown duration unit in '" + s + "'");
  }
  double ns = value * scale;
  if (ns < 0) throw std::invalid_argument("negative duration: '" + s + "'");
  return static_cast<SimTime>(std::llround(ns));
}

}  // namespace bwbroker
