#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace failcast {

struct GradcheckOptions {
  std::size_t seeds = 20;
  double step = 0x1.0p-10;  // 9.765625e-4
  double tolerance = 1e-3;
  std::uint64_t base_seed = 0x6772616463686bULL;
  // Mutation hook: flips the sign of the convolution input gradient so the
  // suite can demonstrate that it detects a broken backward pass.
  bool inject_conv_sign_bug = false;
};

struct GradcheckCase {
  std::string name;            // e.g. "conv2d/grad_input"
  std::size_t seeds = 0;
  std::size_t elements = 0;    // gradient components compared
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double seconds = 0.0;
  bool passed() const;
};

// Compares every analytic layer gradient against central finite differences
// on `seeds` random problems per op. Error is elementwise
// |a - b| / max(|a|, |b|, 1e-6).
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace failcast
