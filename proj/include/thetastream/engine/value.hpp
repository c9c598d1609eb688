#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

namespace thetastream::engine {

// All dataset elements, keys and states share one dynamic value model so that
// lineage recomputation and checkpoint round-trips never depend on C++ types.
using Value = nlohmann::json;

// Stable 64-bit hash used by the default partitioner. std::hash is not pinned
// across implementations, FNV-1a is.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t value_hash(const Value& v) { return fnv1a(v.dump()); }

// Default partitioner: hash(key) mod partition count.
inline int key_partition(const Value& key, int num_partitions) {
  return static_cast<int>(value_hash(key) % static_cast<std::uint64_t>(num_partitions));
}

inline bool is_pair(const Value& v) { return v.is_array() && v.size() == 2; }

}  // namespace thetastream::engine
