#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "thetastream/engine/value.hpp"

namespace thetastream::engine {

using DatasetId = int;

enum class OpKind {
  Source,
  Map,
  Filter,
  FlatMap,
  Union,
  ReduceByKey,
  GroupByKey,
  Join,
};

inline bool is_wide(OpKind k) {
  return k == OpKind::ReduceByKey || k == OpKind::GroupByKey || k == OpKind::Join;
}

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Source: return "source";
    case OpKind::Map: return "map";
    case OpKind::Filter: return "filter";
    case OpKind::FlatMap: return "flatMap";
    case OpKind::Union: return "union";
    case OpKind::ReduceByKey: return "reduceByKey";
    case OpKind::GroupByKey: return "groupByKey";
    case OpKind::Join: return "join";
  }
  return "?";
}

struct SourceOrigin {
  std::vector<Value> items;
};

struct TransformOrigin {
  OpKind kind = OpKind::Map;
  std::vector<DatasetId> parents;
  std::string fn_id;  // empty for union/groupByKey/join
};

// Immutable lineage node. Mutable execution state (caches, counters) lives in
// the Context so nodes can be shared freely.
struct DatasetNode {
  DatasetId id = -1;
  int num_partitions = 0;
  std::variant<SourceOrigin, TransformOrigin> origin;
  bool persisted = false;

  bool is_source() const { return std::holds_alternative<SourceOrigin>(origin); }
  const TransformOrigin& transform() const { return std::get<TransformOrigin>(origin); }
  OpKind kind() const {
    return is_source() ? OpKind::Source : transform().kind;
  }
};

// Contiguous chunking: n elements over p partitions, earlier partitions take
// the remainder. [1..5] over 2 -> [1,2,3] [4,5].
inline std::pair<std::size_t, std::size_t> chunk_bounds(std::size_t n, int parts, int idx) {
  const std::size_t p = static_cast<std::size_t>(parts);
  const std::size_t i = static_cast<std::size_t>(idx);
  const std::size_t base = n / p;
  const std::size_t rem = n % p;
  const std::size_t extra = i < rem ? i : rem;
  const std::size_t begin = base * i + extra;
  const std::size_t len = base + (i < rem ? 1 : 0);
  return {begin, begin + len};
}

}  // namespace thetastream::engine
