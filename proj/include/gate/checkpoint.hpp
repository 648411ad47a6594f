#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "gate/params.hpp"

namespace gate {

// On-disk layout (little-endian):
//   magic "GATECKPT" | u32 version
//   u32 metadata count | { str key | str value }*
//   u64 adam step | u32 slot count
//   { str name | u64 rows | u64 cols | f64[rows*cols] value | f64[] m | f64[] v }*
// where str is u32 byte length followed by the bytes. Slots appear in name order.
inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'T', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet params;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gate
