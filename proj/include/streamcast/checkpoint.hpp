#pragma once

#include <cstdint>
#include <string>

#include "streamcast/optim.hpp"

namespace streamcast {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int version = kCheckpointVersion;
  std::uint64_t config_hash = 0;  // hash of the effective run configuration
  int epochs = 0;                 // epochs completed when the weights were written
  double final_loss = 0.0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

// Single-file container: one JSON header line (version, metadata, parameter
// names/shapes/byte offsets) followed by the values as little-endian 64-bit
// floats in registration order. No timestamps, so identical weights give
// identical bytes.
void save_checkpoint(const std::string& path, const ParamStore& ps, const CheckpointMeta& meta);

// Overwrites the values of an already-wired store (construct the model first,
// then load). The file's parameter names and shapes must match the store
// exactly; throws DataError on any mismatch or on an unsupported version.
CheckpointMeta load_checkpoint(const std::string& path, ParamStore& ps);

// Header-only read, for version/provenance checks without touching weights.
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace streamcast
