#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "failcast/tensor.hpp"

namespace failcast {

enum class LabelKind : std::uint32_t {
  swa_degrees = 0,
  swa_error_degrees = 1,
};

std::string to_string(LabelKind kind);

// In-memory frame container: `count` grayscale frames of height x width
// pixels in [0,1], each with one scalar label in degrees.
//
// On disk ("SFDS" v1, little-endian):
//   0  char[4] magic "SFDS"
//   4  u32     version (1)
//   8  u64     count
//   16 u32     height
//   20 u32     width
//   24 u32     label_kind
//   28 records: count x (height*width f32 pixels row-major, f32 label)
class FrameDataset {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderSize = 28;

  FrameDataset() = default;
  FrameDataset(std::size_t height, std::size_t width, LabelKind kind);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t frame_size() const { return height_ * width_; }
  LabelKind label_kind() const { return kind_; }

  std::span<const float> pixels(std::size_t i) const;
  // Frame i as a [1,H,W] tensor.
  Tensor frame(std::size_t i) const;
  float label(std::size_t i) const { return labels_.at(i); }
  const std::vector<float>& labels() const { return labels_; }

  // Appends one record; pixels must hold frame_size() values in [0,1].
  void add(std::span<const float> pixels, float label);
  void add(const Tensor& frame, float label) { add(frame.data(), label); }

  // First n records (n clamped to size()).
  FrameDataset head(std::size_t n) const;

  std::vector<char> serialize() const;
  static FrameDataset parse(std::span<const char> bytes);

  friend bool operator==(const FrameDataset&, const FrameDataset&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  LabelKind kind_ = LabelKind::swa_degrees;
  std::vector<float> pixels_;
  std::vector<float> labels_;
};

void save_dataset(const FrameDataset& dataset, const std::filesystem::path& path);
FrameDataset load_dataset(const std::filesystem::path& path);

// Hex digest of the serialized dataset bytes.
std::string dataset_digest(const FrameDataset& dataset);

}  // namespace failcast
