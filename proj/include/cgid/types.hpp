#pragma once

namespace cgid {

// Class id. Ground-truth ids are global across stages; predicted ids index classifier outputs.
using Label = int;

}  // namespace cgid
