#pragma once

#include <string>
#include <vector>

#include "thetastream/engine/dataset.hpp"

namespace thetastream::engine {

// Execution plan fragment. A stage is a pipeline of operators evaluated
// together per partition; boundaries sit exactly at wide dependencies. Narrow
// side lineages of a join or union (auxiliary inputs without wide ancestry)
// are evaluated inside the consuming stage and listed in inline_inputs.
struct Stage {
  int id = 0;
  std::vector<DatasetId> pipeline;       // topo order, head first
  std::vector<DatasetId> inline_inputs;  // narrow side chains folded in
  std::vector<int> parents;              // stage ids feeding shuffles
  bool ends_at_action = false;           // root stage of the plan

  std::string describe(
      const std::vector<DatasetNode>& nodes) const;  // single line, for tooling
};

}  // namespace thetastream::engine
