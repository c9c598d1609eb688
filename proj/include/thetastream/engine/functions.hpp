#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "thetastream/engine/errors.hpp"
#include "thetastream/engine/value.hpp"

namespace thetastream::engine {

// Transforms reference their user code by id instead of serialized closures.
// Registered callables must be pure with respect to dataset contents; captured
// inputs travel through broadcast handles or plain parameters baked into the
// callable at registration time. This keeps lineage replayable: recomputing a
// partition re-runs the same ids against the same inputs.
using MapFn = std::function<Value(const Value&)>;
using FilterFn = std::function<bool(const Value&)>;
using FlatMapFn = std::function<std::vector<Value>(const Value&)>;
using ReduceFn = std::function<Value(const Value&, const Value&)>;
using ForeachFn = std::function<void(const Value&)>;

class FunctionRegistry {
 public:
  void add_map(const std::string& id, MapFn fn) { maps_[id] = std::move(fn); }
  void add_filter(const std::string& id, FilterFn fn) { filters_[id] = std::move(fn); }
  void add_flat_map(const std::string& id, FlatMapFn fn) { flat_maps_[id] = std::move(fn); }
  void add_reduce(const std::string& id, ReduceFn fn) { reduces_[id] = std::move(fn); }
  void add_foreach(const std::string& id, ForeachFn fn) { foreaches_[id] = std::move(fn); }

  const MapFn& map(const std::string& id) const { return find(maps_, id); }
  const FilterFn& filter(const std::string& id) const { return find(filters_, id); }
  const FlatMapFn& flat_map(const std::string& id) const { return find(flat_maps_, id); }
  const ReduceFn& reduce(const std::string& id) const { return find(reduces_, id); }
  const ForeachFn& foreach(const std::string& id) const { return find(foreaches_, id); }

 private:
  template <class M>
  static const typename M::mapped_type& find(const M& m, const std::string& id) {
    auto it = m.find(id);
    if (it == m.end()) throw UnknownFunction(id);
    return it->second;
  }

  std::unordered_map<std::string, MapFn> maps_;
  std::unordered_map<std::string, FilterFn> filters_;
  std::unordered_map<std::string, FlatMapFn> flat_maps_;
  std::unordered_map<std::string, ReduceFn> reduces_;
  std::unordered_map<std::string, ForeachFn> foreaches_;
};

}  // namespace thetastream::engine
