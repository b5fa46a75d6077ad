#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oie/model.hpp"

namespace oie {

// Checkpoint layout: a plain-text header (version, model shape, tag
// inventories, vocabulary, RNG state, stage provenance, optional pool
// config, name-sorted tensor table) followed by the raw float64 payload in
// table order. Canonical formatting makes save -> load -> save byte-exact.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(OieModel& model, const std::string& path, int stage);

struct LoadedCheckpoint {
  OieModel model;
  int stage = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Header plus raw per-tensor bytes, without rebuilding a model. Used for
// byte-level comparisons between checkpoints.
struct RawTensor {
  std::string group;
  std::vector<int> shape;
  std::vector<unsigned char> bytes;
};

struct RawCheckpoint {
  int stage = 0;
  std::map<std::string, RawTensor> tensors;
};

RawCheckpoint read_checkpoint_raw(const std::string& path);

}  // namespace oie
