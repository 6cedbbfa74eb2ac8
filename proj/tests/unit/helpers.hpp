#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "failcast/dataset.hpp"
#include "failcast/model.hpp"
#include "failcast/rng.hpp"
#include "failcast/tensor.hpp"

namespace testutil {

// Values on a 1/16 grid in [-2, 2]; sums and products of a few of these are
// exact in float, which keeps finite-difference checks free of rounding.
inline failcast::Tensor grid_tensor(failcast::Shape shape, failcast::Rng& rng) {
  failcast::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(static_cast<int>(rng.below(65)) - 32) / 16.0f;
  return t;
}

inline failcast::Tensor uniform_tensor(failcast::Shape shape, failcast::Rng& rng,
                                       float lo = -1.0f, float hi = 1.0f) {
  failcast::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline failcast::Tensor random_image(const failcast::NetworkSpec& spec,
                                     failcast::Rng& rng) {
  return uniform_tensor({1, spec.input_height, spec.input_width}, rng, 0.0f, 1.0f);
}

inline failcast::Model zero_model(const failcast::NetworkSpec& spec) {
  failcast::Rng rng(0);
  auto m = failcast::init_model(spec, rng);
  for (auto* p : m.parameters()) p->fill(0.0f);
  return m;
}

// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("failcast_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// 10 clean tiny-preset frames from the default generator.
failcast::FrameDataset overfit_fixture();

}  // namespace testutil
