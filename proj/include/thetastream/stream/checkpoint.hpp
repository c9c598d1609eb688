#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "thetastream/engine/value.hpp"

namespace thetastream::stream {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoCheckpoint : CheckpointError {
  NoCheckpoint() : CheckpointError("no checkpoint snapshot found") {}
};

struct StateEntry {
  engine::Value key;
  engine::Value state;
  long long last_update_ms = 0;
};

struct WindowEntry {
  long long seal_ms = 0;
  std::vector<engine::Value> items;
};

// Everything a restarted driver needs besides the write-ahead log: operator
// state, retained window buffers, and the replay cursor (epoch, last batch
// folded into the snapshot, log frame count at snapshot time).
struct CheckpointImage {
  long long created_ms = 0;
  long long epoch = 0;
  long long last_batch = -1;
  long long wal_frames = 0;
  std::map<int, std::vector<StateEntry>> state_ops;    // stream node -> entries
  std::map<int, std::vector<WindowEntry>> window_ops;  // stream node -> buffers
};

// Writes dir/ckpt-<created_ms>/{state.bin,meta}; returns the snapshot path.
// state.bin is magic + version + sections of length-prefixed JSON entries;
// meta is line-oriented key=value text.
std::string write_checkpoint(const std::string& dir, const CheckpointImage& img);

// Loads the newest snapshot under dir; throws NoCheckpoint when none exists.
CheckpointImage load_latest_checkpoint(const std::string& dir);

}  // namespace thetastream::stream
