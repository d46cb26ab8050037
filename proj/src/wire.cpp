#include "bwbroker/wire.hpp"

#include <cstring>

#include "bwbroker/errors.hpp"

namespace bwbroker {

namespace {

constexpr uint8_t kMagic[4] = {'E', 'E', 'Q', '2'};
constexpr size_t kHeaderSize = 16;
constexpr size_t kEntrySize = 8;

void append_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void append_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint64_t read_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<uint8_t> encode_report(const UsageReport& report) {
  if (report.entries.size() > 65535) {
    throw MalformedReportError("a report carries at most 65535 entries");
  }
  std::vector<uint8_t> out;
  out.reserve(kHeaderSize + 2 + kEntrySize * report.entries.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  append_u32(out, report.sender);
  append_u64(out, report.timestamp_us);
  append_u16(out, static_cast<uint16_t>(report.entries.size()));
  for (const auto& [svc, util] : report.entries) {
    append_u32(out, svc);
    uint32_t bits;
    static_assert(sizeof(float) == 4);
    std::memcpy(&bits, &util, 4);
    append_u32(out, bits);
  }
  return out;
}

UsageReport decode_report(const uint8_t* data, size_t size) {
  if (size < kHeaderSize + 2) {
    throw MalformedReportError("report shorter than its header");
  }
  if (std::memcmp(data, kMagic, 4) != 0) {
    throw MalformedReportError("bad report magic");
  }
  UsageReport report;
  report.sender = read_u32(data + 4);
  report.timestamp_us = read_u64(data + 8);
  const size_t count = read_u16(data + 16);
  if (size != kHeaderSize + 2 + kEntrySize * count) {
    throw MalformedReportError("report length does not match its entry count");
  }
  report.entries.reserve(count);
  const uint8_t* p = data + kHeaderSize + 2;
  for (size_t i = 0; i < count; ++i, p += kEntrySize) {
    uint32_t svc = read_u32(p);
    uint32_t bits = read_u32(p + 4);
    float util;
    std::memcpy(&util, &bits, 4);
    report.entries.emplace_back(svc, util);
  }
  return report;
}

UsageReport decode_report(const std::vector<uint8_t>& bytes) {
  return decode_report(bytes.data(), bytes.size());
}

float wire_utilization(int64_t bits_per_sec) {
  return static_cast<float>(bits_per_sec);
}

}  // namespace bwbroker
