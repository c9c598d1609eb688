#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "thetastream/engine/value.hpp"

namespace thetastream::stream {

struct WalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Message record: one payload accepted by a receiver, logged before the
// upstream ack. Seal record: the cut that froze a batch, naming members by
// upstream id so replay rebuilds the exact same batch under the same id.
struct WalMessage {
  std::string stream;
  std::string source_id;
  engine::Value payload;
  long long recv_ms = 0;
};

struct WalSeal {
  long long batch_id = 0;
  long long seal_ms = 0;
  std::map<std::string, std::vector<std::string>> members;  // stream -> source ids
};

// Append-only log: 4-byte magic + version byte, then u32-length-prefixed JSON
// frames. Opening replays the file into memory; a torn final frame is dropped,
// any other malformed content is an error.
class WriteAheadLog {
 public:
  explicit WriteAheadLog(std::string path);

  void append_message(const WalMessage& m);
  void append_seal(const WalSeal& s);

  bool has_source(const std::string& stream, const std::string& source_id) const {
    return sources_.count({stream, source_id}) > 0;
  }

  const std::vector<WalMessage>& messages() const { return messages_; }
  const std::vector<WalSeal>& seals() const { return seals_; }
  long long frames() const { return frames_; }
  const std::string& path() const { return path_; }

 private:
  void write_frame(const engine::Value& v);
  void ingest_frame(const engine::Value& v);

  std::string path_;
  std::vector<WalMessage> messages_;
  std::vector<WalSeal> seals_;
  std::set<std::pair<std::string, std::string>> sources_;
  long long frames_ = 0;
};

}  // namespace thetastream::stream
