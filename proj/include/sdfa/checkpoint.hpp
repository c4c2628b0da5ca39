#pragma once

#include "sdfa/network.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace sdfa {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary container: "SDFACKPT", u32 version, u64 metadata length, metadata
/// JSON, u64 tensor count, then per tensor: u32 name length, name, u32 rank,
/// i64 dims, float32 data. Little-endian.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Architecture fingerprint stored with the weights.
std::string network_fingerprint(const NetworkConfig& config);

/// Weights, running statistics and the network configuration of `net`.
Checkpoint snapshot(DepthNet<float>& net);

/// Copies every parameter and buffer of `net` from the checkpoint. Fails on a
/// fingerprint mismatch, a missing entry or a shape mismatch.
void restore(DepthNet<float>& net, const Checkpoint& ckpt);

/// Builds a network from the stored configuration and loads its weights.
std::unique_ptr<DepthNet<float>> load_network(const std::filesystem::path& path);

}  // namespace sdfa
