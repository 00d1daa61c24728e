#ifndef ESC_MODEL_HPP
#define ESC_MODEL_HPP

#include <string>

#include "esc/nn.hpp"

namespace esc {

struct ModelConfig {
  nn::ArchTag arch = nn::ArchTag::Proposed;
  int n_classes = 10;
  double init_std = 0.05;
  double dropout = 0.5;
  double l2 = 1e-4;
};

namespace detail {

template <typename S>
void init_gaussian(nn::Network<S>& net, double std_dev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std_dev);
  for (auto* p : net.params()) {
    if (!p->decay) continue;  // weights only; biases and BN affines stay 0/1
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c)
        p->value(r, c) = static_cast<S>(normal(rng));
  }
}

template <typename S>
void add_conv_block(nn::Network<S>& net, Eigen::Index kh, Eigen::Index kw,
                    Eigen::Index cin, Eigen::Index cout) {
  net.layers.push_back(std::make_unique<nn::Conv2D<S>>(kh, kw, cin, cout));
  net.layers.push_back(std::make_unique<nn::BatchNorm<S>>(cout));
  net.layers.push_back(std::make_unique<nn::ReLU<S>>());
}

template <typename S>
nn::Network<S> build_stack(const ModelConfig& cfg, bool vgg, Rng& rng) {
  if (cfg.n_classes < 2) throw UsageError("model: need at least two classes");
  nn::Network<S> net;
  net.arch = vgg ? nn::ArchTag::Vgg10 : nn::ArchTag::Proposed;
  net.n_classes = cfg.n_classes;

  struct Block {
    Eigen::Index kh, kw, cout, ph, pw;  // two convs then a pool
  };
  // Kernel and pool sizes per block; the VGG10 variant keeps depth and
  // filter counts but uses 3x3 kernels and 2x2 pooling throughout.
  const Block proposed[4] = {
      {3, 7, 32, 4, 3}, {3, 1, 64, 4, 1}, {1, 5, 128, 1, 3}, {3, 3, 256, 2, 2}};
  const Block vgg10[4] = {
      {3, 3, 32, 2, 2}, {3, 3, 64, 2, 2}, {3, 3, 128, 2, 2}, {3, 3, 256, 2, 2}};
  const Block* blocks = vgg ? vgg10 : proposed;

  Eigen::Index h = net.in_h, w = net.in_w, c = net.in_c;
  for (int i = 0; i < 4; ++i) {
    const Block& blk = blocks[i];
    const Eigen::Index kw2 = i == 0 && !vgg ? 5 : blk.kw;  // Conv2 is (3,5)
    add_conv_block(net, blk.kh, blk.kw, c, blk.cout);
    add_conv_block(net, blk.kh, kw2, blk.cout, blk.cout);
    net.layers.push_back(std::make_unique<nn::MaxPool<S>>(blk.ph, blk.pw));
    c = blk.cout;
    h = (h + blk.ph - 1) / blk.ph;
    w = (w + blk.pw - 1) / blk.pw;
  }

  net.layers.push_back(std::make_unique<nn::Dense<S>>(h * w * c, 512));
  net.layers.push_back(std::make_unique<nn::ReLU<S>>());
  net.fc1_tap = static_cast<int>(net.layers.size()) - 1;
  net.layers.push_back(std::make_unique<nn::Dropout<S>>(cfg.dropout));
  net.layers.push_back(std::make_unique<nn::Dense<S>>(512, cfg.n_classes));

  init_gaussian(net, cfg.init_std, rng);
  return net;
}

}  // namespace detail

// The 8-conv CNN: paired convolutions with mixed 1-D/2-D kernels, BN+ReLU
// after every convolution, ceil-mode max pooling after each pair, then
// FC1(512) + dropout and the class logits.
template <typename S>
nn::Network<S> build_proposed(const ModelConfig& cfg, Rng& rng) {
  return detail::build_stack<S>(cfg, /*vgg=*/false, rng);
}

// Baseline with the same depth and filter counts but 3x3 kernels and 2x2
// pooling everywhere.
template <typename S>
nn::Network<S> build_vgg10(const ModelConfig& cfg, Rng& rng) {
  return detail::build_stack<S>(cfg, /*vgg=*/true, rng);
}

template <typename S>
nn::Network<S> build_model(const ModelConfig& cfg, Rng& rng) {
  return cfg.arch == nn::ArchTag::Vgg10 ? build_vgg10<S>(cfg, rng)
                                        : build_proposed<S>(cfg, rng);
}

// Runs the stack on a batch of flattened segments (one row per sample,
// band-major frame-middle channel-minor order) and returns the logits.
template <typename S>
nn::RowMat<S> forward_logits(const nn::Network<S>& net, const nn::RowMat<S>& rows,
                             bool train, nn::ForwardPass<S>* pass = nullptr,
                             Rng* rng = nullptr) {
  nn::FeatureBatch<S> batch;
  batch.resize(rows.rows(), net.in_h, net.in_w, net.in_c);
  if (rows.cols() != batch.plane() * net.in_c)
    throw ShapeMismatch("forward_logits: flattened input size mismatch");
  batch.flat() = rows;
  return net.forward(batch, train, pass, rng);
}

// Post-ReLU FC1 activations (batch x 512) in eval mode.
template <typename S>
nn::RowMat<S> extract_fc1(const nn::Network<S>& net, const nn::RowMat<S>& rows) {
  nn::FeatureBatch<S> batch;
  batch.resize(rows.rows(), net.in_h, net.in_w, net.in_c);
  if (rows.cols() != batch.plane() * net.in_c)
    throw ShapeMismatch("extract_fc1: flattened input size mismatch");
  batch.flat() = rows;
  nn::RowMat<S> fc1;
  net.forward(batch, /*train=*/false, nullptr, nullptr, &fc1);
  return fc1;
}

// ESCW checkpoint: magic "ESCW", version u16 = 1, arch tag, class count,
// layer count, then per layer a kind tag and its tensors (shape list +
// float32 data, row-major, little-endian). BatchNorm running statistics
// ride along as state tensors.
void save_network(const std::string& path, const nn::Network<float>& net);
nn::Network<float> load_network(const std::string& path);

}  // namespace esc

#endif  // ESC_MODEL_HPP
