#include "failcast/dataset.hpp"

#include <cmath>

#include "failcast/binary_io.hpp"
#include "failcast/error.hpp"

namespace failcast {

namespace {
constexpr char kMagic[] = "SFDS";
}

std::string to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::swa_degrees:
      return "swa_degrees";
    case LabelKind::swa_error_degrees:
      return "swa_error_degrees";
  }
  return "unknown";
}

FrameDataset::FrameDataset(std::size_t height, std::size_t width,
                           LabelKind kind)
    : height_(height), width_(width), kind_(kind) {
  if (height == 0 || width == 0) {
    throw DimensionError("FrameDataset: frame dimensions must be positive");
  }
}

std::span<const float> FrameDataset::pixels(std::size_t i) const {
  if (i >= size()) {
    throw DataError("FrameDataset: record " + std::to_string(i) +
                    " out of range (size " + std::to_string(size()) + ")");
  }
  return std::span<const float>(pixels_).subspan(i * frame_size(), frame_size());
}

Tensor FrameDataset::frame(std::size_t i) const {
  const auto p = pixels(i);
  return Tensor({1, height_, width_}, std::vector<float>(p.begin(), p.end()));
}

void FrameDataset::add(std::span<const float> pixels, float label) {
  if (pixels.size() != frame_size()) {
    throw DimensionError("FrameDataset: frame has " +
                         std::to_string(pixels.size()) + " pixels, expected " +
                         std::to_string(height_) + "x" + std::to_string(width_));
  }
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DataError("FrameDataset: pixel value " + std::to_string(v) +
                      " outside [0,1]");
    }
  }
  if (!std::isfinite(label)) throw DataError("FrameDataset: non-finite label");
  pixels_.insert(pixels_.end(), pixels.begin(), pixels.end());
  labels_.push_back(label);
}

FrameDataset FrameDataset::head(std::size_t n) const {
  n = std::min(n, size());
  FrameDataset out(height_, width_, kind_);
  out.pixels_.assign(pixels_.begin(),
                     pixels_.begin() + static_cast<std::ptrdiff_t>(n * frame_size()));
  out.labels_.assign(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

std::vector<char> FrameDataset::serialize() const {
  ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u64(size());
  w.u32(static_cast<std::uint32_t>(height_));
  w.u32(static_cast<std::uint32_t>(width_));
  w.u32(static_cast<std::uint32_t>(kind_));
  const std::span<const float> all(pixels_);
  for (std::size_t i = 0; i < size(); ++i) {
    w.f32s(all.subspan(i * frame_size(), frame_size()));
    w.f32(labels_[i]);
  }
  return w.take();
}

FrameDataset FrameDataset::parse(std::span<const char> bytes) {
  ByteReader r(bytes, "SFDS");
  if (r.bytes(4) != std::string_view(kMagic, 4)) {
    throw FormatError("SFDS: bad magic at byte offset 0");
  }
  const auto version = r.u32();
  if (version != kVersion) {
    throw FormatError("SFDS: unsupported version " + std::to_string(version) +
                      " at byte offset 4 (expected " + std::to_string(kVersion) +
                      ")");
  }
  const auto count = r.u64();
  const auto height = r.u32();
  const auto width = r.u32();
  const auto kind = r.u32();
  if (kind > 1) {
    throw FormatError("SFDS: unknown label_kind " + std::to_string(kind) +
                      " at byte offset 24");
  }
  if (height == 0 || width == 0) {
    throw FormatError("SFDS: zero frame dimension in header");
  }
  const std::uint64_t expected =
      kHeaderSize + count * (static_cast<std::uint64_t>(height) * width + 1) * 4;
  if (bytes.size() != expected) {
    throw FormatError("SFDS: file length " + std::to_string(bytes.size()) +
                      " does not match header (expected " +
                      std::to_string(expected) + ")");
  }
  FrameDataset ds(height, width, static_cast<LabelKind>(kind));
  std::vector<float> frame(ds.frame_size());
  ds.pixels_.reserve(count * ds.frame_size());
  ds.labels_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto offset = r.offset();
    r.f32s(frame);
    const float label = r.f32();
    try {
      ds.add(frame, label);
    } catch (const Error& e) {
      throw FormatError("SFDS: invalid record " + std::to_string(i) +
                        " at byte offset " + std::to_string(offset) + ": " +
                        e.what());
    }
  }
  return ds;
}

void save_dataset(const FrameDataset& dataset,
                  const std::filesystem::path& path) {
  write_file(path, dataset.serialize());
}

FrameDataset load_dataset(const std::filesystem::path& path) {
  return FrameDataset::parse(read_file(path));
}

std::string dataset_digest(const FrameDataset& dataset) {
  return fnv1a_hex(dataset.serialize());
}

}  // namespace failcast
