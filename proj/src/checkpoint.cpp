#include "gmmunit/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "gmmunit/errors.hpp"

namespace gmmunit {

namespace {

constexpr char kMagic[8] = {'G', 'M', 'M', 'U', 'N', 'I', 'T', '\0'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kUInt8: return "uint8";
    default: throw CheckpointError("unsupported tensor dtype in archive");
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  if (name == "uint8") return torch::kUInt8;
  throw CheckpointError("unknown tensor dtype '" + name + "'");
}

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

std::uint32_t crc_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < size; off += kChunk) {
    const auto n = static_cast<uInt>(std::min(kChunk, size - off));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data + off), n);
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

const torch::Tensor& TensorArchive::at(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointError("archive has no tensor '" + name + "'");
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

void save_archive(const TensorArchive& archive, const std::string& path) {
  nlohmann::json index = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, tensor] : archive.tensors) {
    const auto t = tensor.detach().contiguous().cpu();
    const auto bytes = static_cast<std::size_t>(t.numel()) * t.element_size();
    index.push_back({{"name", name},
                     {"dtype", dtype_name(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", payload.size()},
                     {"bytes", bytes}});
    payload.append(static_cast<const char*>(t.data_ptr()), bytes);
  }
  const std::string header = nlohmann::json{{"meta", archive.meta}, {"tensors", index}}.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kArchiveVersion);
  put<std::uint64_t>(blob, header.size());
  blob += header;
  blob += payload;
  put<std::uint32_t>(blob, crc_of(blob.data(), blob.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path);
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t kFixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (blob.size() < kFixed + sizeof(std::uint32_t) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path + ": not a checkpoint container");
  }
  const auto body = blob.size() - sizeof(std::uint32_t);
  if (get<std::uint32_t>(blob, body) != crc_of(blob.data(), body)) {
    throw CheckpointError(path + ": checksum mismatch (corrupt or tampered container)");
  }
  const auto version = get<std::uint32_t>(blob, sizeof(kMagic));
  if (version != kArchiveVersion) {
    throw CheckpointError(path + ": container version " + std::to_string(version) + ", expected " +
                          std::to_string(kArchiveVersion));
  }
  const auto header_size = get<std::uint64_t>(blob, sizeof(kMagic) + sizeof(std::uint32_t));
  if (kFixed + header_size > body) throw CheckpointError(path + ": truncated header");

  TensorArchive archive;
  std::size_t payload_start = kFixed + header_size;
  try {
    const auto header = nlohmann::json::parse(blob.substr(kFixed, header_size));
    archive.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto bytes = entry.at("bytes").get<std::size_t>();
      if (payload_start + offset + bytes > body) throw CheckpointError(path + ": tensor data out of range");
      const auto shape = entry.at("shape").get<std::vector<int64_t>>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from_name(entry.at("dtype"))));
      if (static_cast<std::size_t>(t.numel()) * t.element_size() != bytes) {
        throw CheckpointError(path + ": tensor size does not match its shape");
      }
      std::memcpy(t.data_ptr(), blob.data() + payload_start + offset, bytes);
      archive.tensors.emplace_back(entry.at("name").get<std::string>(), t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": malformed header: " + e.what());
  }
  return archive;
}

void store_module(TensorArchive& archive, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters()) archive.add(prefix + item.key(), item.value());
}

void restore_module(const TensorArchive& archive, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters()) {
    const auto& src = archive.at(prefix + item.key());
    if (src.sizes() != item.value().sizes()) {
      throw CheckpointError("shape mismatch for " + prefix + item.key());
    }
    item.value().copy_(src);
  }
}

}  // namespace gmmunit
