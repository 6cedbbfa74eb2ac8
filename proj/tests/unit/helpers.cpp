#include "helpers.hpp"

#include "failcast/scenegen.hpp"

namespace testutil {

failcast::FrameDataset overfit_fixture() {
  failcast::DatasetGenConfig cfg;
  cfg.count = 10;
  cfg.seed = 1234;
  cfg.hard_case_rate = 0.0;
  return failcast::generate_dataset(cfg).frames;
}

}  // namespace testutil
