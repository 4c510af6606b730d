#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "handformer/numerics/optim.hpp"

namespace handformer::train {

// .hfck layout: a text manifest
//   HFCK 1
//   meta <key>=<value>
//   tensor <name> <section> dtype=f32 shape=<a>x<b> offset=<bytes> count=<n>
//   data_bytes <n>
//   END
// followed by the raw little-endian float32 blob the offsets point into.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, nn::Tensor<float>> tensors;
};

inline constexpr const char* kOptimizerSection = "optimizer";

Checkpoint make_checkpoint(const nn::ParameterSet<float>& params,
                           const nn::OptimizerState<float>* optimizer,
                           std::map<std::string, std::string> meta);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies tensors into matching parameters. With `sections`, only parameters
// in those sections are loaded and each must be present; otherwise every
// parameter must be present. Returns the number of tensors loaded.
std::size_t load_parameters(const Checkpoint& ckpt, const nn::ParameterSet<float>& params,
                            const std::optional<std::set<std::string>>& sections = std::nullopt);

// Restores velocity buffers, lr and epoch counter saved by make_checkpoint.
void load_optimizer(const Checkpoint& ckpt, const nn::ParameterSet<float>& params,
                    nn::OptimizerState<float>& state);

}  // namespace handformer::train
