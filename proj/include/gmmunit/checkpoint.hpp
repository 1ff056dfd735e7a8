#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace gmmunit {

inline constexpr std::uint32_t kArchiveVersion = 1;

// Named tensors plus a JSON metadata block.
//
// On-disk layout (little endian):
//   "GMMUNIT\0" | u32 version | u64 header size | header JSON | tensor bytes | u32 crc32
// The header lists each tensor's name, dtype, shape and byte range. The crc
// covers every preceding byte; loading verifies it before decoding anything.
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  void add(std::string name, const torch::Tensor& tensor) { tensors.emplace_back(std::move(name), tensor); }
  const torch::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_archive(const TensorArchive& archive, const std::string& path);
TensorArchive load_archive(const std::string& path);

// Copies tensors named `prefix + parameter name` into the module's
// parameters; every parameter must be present with a matching shape.
void store_module(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module);
void restore_module(const TensorArchive& archive, const std::string& prefix, torch::nn::Module& module);

}  // namespace gmmunit
