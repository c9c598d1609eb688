#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace thetastream::theta {

struct ImmutableRecord {
  std::uint64_t seq = 0;  // 1-based, gapless per collection
  long long append_ts = 0;
  nlohmann::json payload;
};

// Append-only record store; existing records are never mutated or deleted.
// Optionally file-backed: appends stream to a versioned log of length-prefixed
// JSON frames, and the constructor replays an existing log.
class ImmutableStore {
 public:
  ImmutableStore() = default;
  explicit ImmutableStore(const std::string& log_path);
  ~ImmutableStore();

  ImmutableStore(const ImmutableStore&) = delete;
  ImmutableStore& operator=(const ImmutableStore&) = delete;

  std::uint64_t append(const std::string& collection, nlohmann::json payload,
                       long long ts);

  // Unknown collections scan as empty.
  const std::vector<ImmutableRecord>& scan(const std::string& collection) const;
  std::vector<ImmutableRecord> scan_if(
      const std::string& collection,
      const std::function<bool(const ImmutableRecord&)>& pred) const;

  std::uint64_t size(const std::string& collection) const;

  static constexpr char kMagic[4] = {'T', 'S', 'I', 'L'};
  static constexpr std::uint8_t kVersion = 1;

 private:
  void persist(const std::string& collection, const ImmutableRecord& rec);

  std::map<std::string, std::vector<ImmutableRecord>> collections_;
  std::vector<ImmutableRecord> empty_;
  std::ofstream log_;
};

}  // namespace thetastream::theta
