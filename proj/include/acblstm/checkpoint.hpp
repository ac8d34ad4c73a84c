#ifndef ACBLSTM_CHECKPOINT_HPP_
#define ACBLSTM_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "acblstm/layers.hpp"

namespace acblstm {

// Checkpoint file: a human-readable header block followed by raw
// little-endian 64-bit float payloads, one per named tensor. Bit-exact
// round-tripping is the contract.

struct CheckpointData {
  int version = 1;
  std::vector<std::pair<std::string, std::string>> config;  // resolved key/value echo
  std::string rng_state;
  std::vector<std::string> vocab;  // embedding row tokens; may be empty
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace acblstm

#endif  // ACBLSTM_CHECKPOINT_HPP_
