#pragma once

#include <string>

#include "svitq/model.hpp"

namespace svitq {

// Binary checkpoint format:
//   bytes 0-3   magic "QSVC"
//   bytes 4-7   format version, u32 little-endian
//   bytes 8-15  header length in bytes, u64 little-endian
//   header      JSON text: architecture config, per-layer shape table,
//               precision map, dataset tag
//   payload     little-endian float32 blobs in layer order (SDSA layers store
//               query, key, value in that order, then bias if present), then
//               head weight and head bias
inline constexpr char kCheckpointMagic[4] = {'Q', 'S', 'V', 'C'};
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const NetworkModel& model, const std::string& path,
                     const std::string& dataset_tag = "");

NetworkModel load_checkpoint(const std::string& path);

std::string checkpoint_dataset_tag(const std::string& path);

} // namespace svitq
