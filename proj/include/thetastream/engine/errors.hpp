#pragma once

#include <stdexcept>
#include <string>

namespace thetastream::engine {

struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroPartitions : EngineError {
  ZeroPartitions() : EngineError("dataset needs at least one partition") {}
};

struct NotKeyed : EngineError {
  explicit NotKeyed(const std::string& what)
      : EngineError("keyed operation over non-pair element: " + what) {}
};

struct UnknownDataset : EngineError {
  explicit UnknownDataset(int id)
      : EngineError("unknown dataset id " + std::to_string(id)) {}
};

struct UnknownFunction : EngineError {
  explicit UnknownFunction(const std::string& id)
      : EngineError("no registered function '" + id + "'") {}
};

struct PartitionOutOfRange : EngineError {
  PartitionOutOfRange(int idx, int n)
      : EngineError("partition " + std::to_string(idx) + " out of range (have " +
                    std::to_string(n) + ")") {}
};

// Raised on the driver after a task exhausted its retry budget.
struct TaskFailed : EngineError {
  using EngineError::EngineError;
};

// Accumulators are write-only from tasks; totals are a driver concern.
struct WorkerReadForbidden : EngineError {
  WorkerReadForbidden() : EngineError("accumulator value read from task context") {}
};

struct UnknownBroadcast : EngineError {
  explicit UnknownBroadcast(int id)
      : EngineError("unknown broadcast handle " + std::to_string(id)) {}
};

}  // namespace thetastream::engine
