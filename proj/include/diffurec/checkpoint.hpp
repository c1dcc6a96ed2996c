#pragma once

#include <string>

#include "diffurec/approximator.hpp"
#include "diffurec/config.hpp"

namespace diffurec {

struct ModelCheckpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  TrainConfig config;
  ApproximatorParams params;
  int n_items = 0;
  int epoch = 0;  // last epoch whose update is included
};

/// Binary layout (little-endian):
///   magic "DFRECKPT" | u32 version | u64 metadata length | metadata text
///   u32 tensor count | per tensor: u32 name length, name, u32 rank,
///   rank x u64 dims, row-major f64 values.
/// The metadata text is the serialized TrainConfig plus n_items and epoch lines.
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::string& path);

/// Throws CheckpointFormatError (bad magic or metadata),
/// CheckpointVersionError, CheckpointTruncatedError (naming the tensor being
/// read) or CheckpointShapeError (tensor table disagrees with the config).
ModelCheckpoint load_checkpoint(const std::string& path);

std::string serialize_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace diffurec
