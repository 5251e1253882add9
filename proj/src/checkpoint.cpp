#include "hydrofix/segnet/checkpoint.hpp"

#include "byte_io.hpp"
#include "hydrofix/error.hpp"

namespace hydrofix::segnet {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  hydrofix::detail::ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.arch.depth));
  w.u32(static_cast<std::uint32_t>(ckpt.arch.base_channels));
  w.u32(static_cast<std::uint32_t>(ckpt.arch.input_channels));
  w.f32(ckpt.arch.gamma);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xffff) throw InvalidArgument("tensor name too long: " + name);
    if (t.shape.size() > 0xff) throw InvalidArgument("tensor rank too large: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f32(t.data[i]);
  }
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  hydrofix::detail::ByteReader<TruncatedPayloadError> r(bytes.data(), bytes.size());
  if (bytes.size() < 4 || r.str(4, "magic") != std::string(kMagic, 4))
    throw MalformedHeaderError("bad magic, expected HCM1");
  if (r.u32("version") != kVersion) throw MalformedHeaderError("unsupported HCM1 version");
  Checkpoint ckpt;
  ckpt.arch.depth = static_cast<int>(r.u32("depth"));
  ckpt.arch.base_channels = static_cast<int>(r.u32("base_channels"));
  ckpt.arch.input_channels = static_cast<int>(r.u32("input_channels"));
  ckpt.arch.gamma = r.f32("gamma");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16("name length");
    std::string name = r.str(len, "name");
    const std::uint8_t rank = r.u8("rank");
    std::vector<int> shape;
    std::uint64_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32("dims");
      numel *= dim;
      if (numel > (std::uint64_t{1} << 31)) throw DimensionOverflowError("tensor " + name + " too large");
      shape.push_back(static_cast<int>(dim));
    }
    Tensor<float> t(shape);
    r.f32_array(t.data.data(), static_cast<std::size_t>(numel), "tensor data");
    if (!ckpt.tensors.emplace(std::move(name), std::move(t)).second)
      throw MalformedHeaderError("duplicate tensor name");
  }
  if (r.remaining() != 0) throw MalformedHeaderError("trailing bytes after tensors");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  hydrofix::detail::write_file_bytes(path.string(), serialize_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(hydrofix::detail::read_file_bytes(path.string()));
}

Checkpoint optimizer_checkpoint(const ModelArch& arch, const AdamState<float>& state) {
  Checkpoint c{arch, {}};
  for (const auto& [name, t] : state.m) c.tensors.emplace("m." + name, t);
  for (const auto& [name, t] : state.v) c.tensors.emplace("v." + name, t);
  Tensor<float> step({1});
  step.data[0] = static_cast<float>(state.step);
  c.tensors.emplace("step", step);
  return c;
}

AdamState<float> optimizer_from_checkpoint(const Checkpoint& ckpt) {
  AdamState<float> s;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name == "step") {
      s.step = static_cast<std::int64_t>(t.data[0]);
    } else if (name.rfind("m.", 0) == 0) {
      s.m.emplace(name.substr(2), t);
    } else if (name.rfind("v.", 0) == 0) {
      s.v.emplace(name.substr(2), t);
    } else {
      throw MalformedHeaderError("unexpected optimizer tensor " + name);
    }
  }
  return s;
}

std::filesystem::path optimizer_path(const std::filesystem::path& model_path) {
  std::filesystem::path p = model_path;
  p.replace_extension(".adam.hcm");
  return p;
}

}  // namespace hydrofix::segnet
