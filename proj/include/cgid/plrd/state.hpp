#pragma once

#include <cstddef>

#include "cgid/plrd/memory.hpp"
#include "cgid/plrd/model.hpp"
#include "cgid/plrd/prototypes.hpp"

namespace cgid {

// Everything a continual learner carries from one stage to the next.
struct LearnerState {
  JointModel model;
  ReplayMemory memory;
  PrototypeBank bank;
  std::size_t stage = 0;  // index of the last completed stage
};

}  // namespace cgid
