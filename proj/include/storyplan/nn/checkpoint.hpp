#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "storyplan/nn/tensor.hpp"

namespace storyplan::nn {

/// Checkpoint container, version 1. All integers and values little-endian:
///
///   magic   8 bytes  "SPCKPT\0\1"
///   version u32      1
///   count   u32      number of tensors
///   per tensor:
///     name_len u32, name bytes (UTF-8)
///     ndim u32, dims u64[ndim]
///     values f64[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
/// Throws ValidationError on a bad magic, unknown version or truncated file.
NamedTensors read_checkpoint(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const ParameterSet& params);
/// Every parameter must be present with a matching shape.
void load_parameters(const std::filesystem::path& path, ParameterSet& params);

}  // namespace storyplan::nn
