#include "failcast/checkpoint.hpp"

#include "failcast/binary_io.hpp"
#include "failcast/error.hpp"

namespace failcast {

namespace {
constexpr std::string_view kMagic = "SFCK";
}

std::vector<char> serialize_checkpoint(const Model& model) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  const std::string descriptor = to_json(model.spec).dump();
  w.u32(static_cast<std::uint32_t>(descriptor.size()));
  w.bytes(descriptor);
  std::uint64_t count = 0;
  for (const auto* p : model.parameters()) count += p->size();
  w.u64(count);
  for (const auto* p : model.parameters()) w.f32s(p->data());
  w.bytes(model.metadata.dump());
  return w.take();
}

Model parse_checkpoint(std::span<const char> bytes) {
  ByteReader r(bytes, "SFCK");
  if (r.bytes(kMagic.size()) != kMagic) {
    throw FormatError("SFCK: bad magic at byte offset 0");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("SFCK: version mismatch at byte offset 4: file has " +
                      std::to_string(version) + ", reader supports " +
                      std::to_string(kCheckpointVersion));
  }
  const auto desc_len = r.u32();
  const auto desc_offset = r.offset();
  const std::string descriptor = r.bytes(desc_len);
  NetworkSpec spec;
  try {
    spec = network_spec_from_json(nlohmann::json::parse(descriptor));
    spec.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("SFCK: unreadable descriptor at byte offset " +
                      std::to_string(desc_offset) + ": " + e.what());
  } catch (const SpecError& e) {
    throw FormatError("SFCK: invalid descriptor at byte offset " +
                      std::to_string(desc_offset) + ": " + e.what());
  }

  Rng unused(0);
  Model model = init_model(spec, unused);
  std::uint64_t expected = 0;
  for (const auto* p : model.parameters()) expected += p->size();
  const auto count_offset = r.offset();
  const auto count = r.u64();
  if (count != expected) {
    throw FormatError("SFCK: weight count " + std::to_string(count) +
                      " at byte offset " + std::to_string(count_offset) +
                      " does not match the descriptor (" +
                      std::to_string(expected) + ")");
  }
  for (auto* p : model.parameters()) r.f32s(p->data());
  for (const auto* p : model.parameters()) {
    if (!p->all_finite()) throw FormatError("SFCK: non-finite weight value");
  }
  const auto meta_offset = r.offset();
  const std::string meta = r.bytes(r.remaining());
  try {
    model.metadata = meta.empty() ? nlohmann::json::object()
                                  : nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("SFCK: unreadable metadata at byte offset " +
                      std::to_string(meta_offset) + ": " + e.what());
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

std::string model_digest(const Model& model) {
  return fnv1a_hex(serialize_checkpoint(model));
}

}  // namespace failcast
