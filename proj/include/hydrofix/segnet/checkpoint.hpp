#pragma once

#include <filesystem>

#include "hydrofix/segnet/adam.hpp"
#include "hydrofix/segnet/model.hpp"

namespace hydrofix::segnet {

struct Checkpoint {
  ModelArch arch;
  ParamMap<float> tensors;
};

// HCM1 model files. Optimizer state uses the same layout with tensors named
// "m.<param>", "v.<param>" and a one-element "step" tensor.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint optimizer_checkpoint(const ModelArch& arch, const AdamState<float>& state);
AdamState<float> optimizer_from_checkpoint(const Checkpoint& ckpt);

/// Sibling path for optimizer state: model.hcm -> model.adam.hcm
std::filesystem::path optimizer_path(const std::filesystem::path& model_path);

}  // namespace hydrofix::segnet
