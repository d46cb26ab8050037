#pragma once

#include <cstdint>
#include <vector>

namespace bwbroker {

// One (service, utilization) snapshot exchanged between brokers each
// interval. The same record carries machine usage inside a rack and rack
// usage up to the fabric broker (sender is then a rack id), as well as
// fabric->rack limit pushes (utilization is then a limit).
struct UsageReport {
  uint32_t sender = 0;
  uint64_t timestamp_us = 0;
  // (service id, bits/s), unique and ascending by id.
  std::vector<std::pair<uint32_t, float>> entries;
};

// Wire form, little-endian:
//   u32 magic "EEQ2" | u32 sender | u64 timestamp_us | u16 count |
//   count * { u32 service, f32 utilization }
// 16-byte header, 8 bytes per service.
std::vector<uint8_t> encode_report(const UsageReport& report);

// Throws MalformedReportError on bad magic, truncation, or trailing bytes.
UsageReport decode_report(const uint8_t* data, size_t size);
UsageReport decode_report(const std::vector<uint8_t>& bytes);

// f32 round-trip applied at collection time so every machine computes from
// exactly the values that travel on the wire.
float wire_utilization(int64_t bits_per_sec);

}  // namespace bwbroker
