#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"

namespace thetastream::theta {

struct ViewRow {
  std::string key;
  nlohmann::json columns;
  long long writer_batch_id = 0;
};

// Random-access view fed by batch writers. Upserts are idempotent per
// (writer_batch_id, key) so replayed batches leave rows untouched; fresh
// writes follow last-writer-wins in application order.
class ServingView {
 public:
  // Returns true when the write was applied, false when it was a replay.
  bool upsert(const std::string& table, const std::string& key,
              nlohmann::json columns, long long writer_batch_id);

  std::optional<ViewRow> query(const std::string& table, const std::string& key) const;
  std::size_t row_count(const std::string& table) const;
  std::size_t applied_writes(const std::string& table) const;

 private:
  struct Table {
    std::map<std::string, ViewRow> rows;
    std::set<std::pair<long long, std::string>> applied;
  };
  std::map<std::string, Table> tables_;
};

}  // namespace thetastream::theta
