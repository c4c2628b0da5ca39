#include "sdfa/checkpoint.hpp"

#include "sdfa/config.hpp"

#include <cstring>
#include <fstream>

namespace sdfa {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'F', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw CheckpointError("checkpoint '" + path.string() + "' is truncated");
  return value;
}

std::string get_string(std::istream& in, std::size_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw CheckpointError("checkpoint '" + path.string() + "' is truncated");
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    const std::string meta = ckpt.meta.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, 4);
      const Shape s = t.shape();
      for (Index d : {s.n, s.c, s.h, s.w}) put<std::int64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError("'" + path.string() + "' is not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion)
    throw CheckpointError("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = get<std::uint64_t>(in, path);
  ckpt.meta = nlohmann::json::parse(get_string(in, meta_len, path), nullptr, false);
  if (ckpt.meta.is_discarded()) throw CheckpointError("checkpoint '" + path.string() + "' has corrupt metadata");
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, get<std::uint32_t>(in, path), path);
    const auto rank = get<std::uint32_t>(in, path);
    if (rank != 4) throw CheckpointError("checkpoint entry '" + name + "' has rank " + std::to_string(rank));
    Shape s;
    s.n = get<std::int64_t>(in, path);
    s.c = get<std::int64_t>(in, path);
    s.h = get<std::int64_t>(in, path);
    s.w = get<std::int64_t>(in, path);
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw CheckpointError("checkpoint entry '" + name + "' has a negative dimension");
    Tensor<float> t(s);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
      throw CheckpointError("checkpoint '" + path.string() + "' is truncated");
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

std::string network_fingerprint(const NetworkConfig& config) {
  nlohmann::json j = to_json(config);
  j.erase("network.seed");
  return j.dump();
}

Checkpoint snapshot(DepthNet<float>& net) {
  Checkpoint ckpt;
  ckpt.meta["network"] = to_json(net.config());
  ckpt.meta["fingerprint"] = network_fingerprint(net.config());
  auto params = net.parameters();
  for (const auto& p : params.params) ckpt.tensors.emplace(p.name, p.var->value());
  for (const auto& b : params.buffers) ckpt.tensors.emplace(b.name, *b.tensor);
  return ckpt;
}

void restore(DepthNet<float>& net, const Checkpoint& ckpt) {
  const std::string expected = network_fingerprint(net.config());
  if (!ckpt.meta.contains("fingerprint") || ckpt.meta.at("fingerprint").get<std::string>() != expected)
    throw CheckpointError("checkpoint architecture does not match the network configuration");
  auto params = net.parameters();
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor<float>& {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint is missing '" + name + "'");
    if (it->second.shape() != shape)
      throw CheckpointError("checkpoint entry '" + name + "' has shape " + it->second.shape().str() + ", expected " +
                            shape.str());
    return it->second;
  };
  for (auto& p : params.params) p.var->mutable_value() = fetch(p.name, p.var->shape());
  for (auto& b : params.buffers) *b.tensor = fetch(b.name, b.tensor->shape());
  net.mark_loaded();
}

std::unique_ptr<DepthNet<float>> load_network(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (!ckpt.meta.contains("network")) throw CheckpointError("checkpoint '" + path.string() + "' has no network config");
  NetworkConfig config;
  try {
    config = network_config_from_json(ckpt.meta.at("network"));
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint '" + path.string() + "': " + e.what());
  }
  auto net = std::make_unique<DepthNet<float>>(config, DepthNet<float>::Init::none);
  restore(*net, ckpt);
  net->set_training(false);
  return net;
}

}  // namespace sdfa
