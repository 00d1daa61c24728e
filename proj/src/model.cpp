#include "esc/model.hpp"

#include <bit>
#include <fstream>

namespace esc {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

struct TensorSlot {
  nn::RowMat<float>* value;
  std::vector<Eigen::Index> shape;
};

std::vector<TensorSlot> layer_tensors(nn::Layer<float>& layer) {
  std::vector<TensorSlot> slots;
  for (auto* p : layer.params()) slots.push_back({&p->value, p->shape});
  for (auto& s : layer.state()) slots.push_back({s.value, s.shape});
  return slots;
}

void write_tensor(std::ofstream& f, const nn::RowMat<float>& m,
                  const std::vector<Eigen::Index>& shape) {
  io::write_u32(f, static_cast<uint32_t>(shape.size()));
  Eigen::Index count = 1;
  for (auto d : shape) {
    io::write_u32(f, static_cast<uint32_t>(d));
    count *= d;
  }
  if (count != m.size())
    throw ShapeMismatch("checkpoint: tensor shape does not match data");
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(m.size()) * 4);
}

void read_tensor(std::ifstream& f, const std::string& path, nn::RowMat<float>& m,
                 const std::vector<Eigen::Index>& expected_shape) {
  const uint32_t ndims = io::read_u32(f);
  if (ndims != expected_shape.size())
    throw DataError(path + ": tensor rank mismatch");
  Eigen::Index count = 1;
  for (uint32_t i = 0; i < ndims; ++i) {
    const uint32_t d = io::read_u32(f);
    if (static_cast<Eigen::Index>(d) != expected_shape[i])
      throw DataError(path + ": tensor shape mismatch");
    count *= d;
  }
  if (count != m.size()) throw DataError(path + ": tensor size mismatch");
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(m.size()) * 4);
  if (!f) throw DataError(path + ": truncated tensor data");
}

}  // namespace

void save_network(const std::string& path, const nn::Network<float>& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write("ESCW", 4);
  io::write_u16(f, 1);
  f.put(static_cast<char>(net.arch));
  io::write_u32(f, static_cast<uint32_t>(net.n_classes));
  io::write_u32(f, static_cast<uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    f.put(static_cast<char>(layer->kind()));
    auto slots = layer_tensors(*layer);
    io::write_u32(f, static_cast<uint32_t>(slots.size()));
    for (const auto& slot : slots) write_tensor(f, *slot.value, slot.shape);
  }
  if (!f) throw DataError("short write: " + path);
}

nn::Network<float> load_network(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "ESCW")
    throw DataError(path + ": not an ESCW checkpoint");
  if (io::read_u16(f) != 1) throw DataError(path + ": unsupported ESCW version");
  const int arch_tag = f.get();
  const uint32_t n_classes = io::read_u32(f);
  const uint32_t layer_count = io::read_u32(f);

  ModelConfig cfg;
  cfg.arch = static_cast<nn::ArchTag>(arch_tag);
  cfg.n_classes = static_cast<int>(n_classes);
  Rng rng(0);  // weights are overwritten below
  nn::Network<float> net = build_model<float>(cfg, rng);
  if (net.layers.size() != layer_count)
    throw DataError(path + ": layer count does not match architecture");

  for (auto& layer : net.layers) {
    const int kind = f.get();
    if (kind != static_cast<int>(layer->kind()))
      throw DataError(path + ": layer kind mismatch");
    auto slots = layer_tensors(*layer);
    const uint32_t n_tensors = io::read_u32(f);
    if (n_tensors != slots.size()) throw DataError(path + ": tensor count mismatch");
    for (auto& slot : slots) read_tensor(f, path, *slot.value, slot.shape);
  }
  return net;
}

}  // namespace esc
