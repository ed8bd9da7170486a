#pragma once

#include <map>
#include <vector>

#include "fwtrack/graph.hpp"

namespace fwtrack {

struct TrajectoryBox {
  Box box;
  bool extrapolated = false;  // body box derived from a head detection
};

struct Trajectory {
  int person_id = 0;
  std::map<int, TrajectoryBox> boxes;  // frame -> box, at most one per frame
  std::vector<int> detection_ids;
};

}  // namespace fwtrack
