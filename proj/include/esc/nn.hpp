#ifndef ESC_NN_HPP
#define ESC_NN_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "esc/common.hpp"

// Layer library for the classifier: dense tensors in channels-last layout,
// exact analytic backward passes, SGD with Nesterov momentum. Everything is
// templated on the scalar so training runs in float while gradient checks
// run in double.
namespace esc::nn {

using Eigen::Index;

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
using ArgMat = Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A batch of feature maps. Row r = sample r / (h*w) at spatial position
// r % (h*w) in row-major (h, w) order; columns are channels. Flattening a
// sample in this layout yields band-major, time-middle, channel-minor
// order, the same order the feature files and checkpoints use.
template <typename S>
struct FeatureBatch {
  RowMat<S> data;
  Index batch = 0, h = 0, w = 0, c = 0;

  Index plane() const { return h * w; }
  void resize(Index b, Index hh, Index ww, Index cc) {
    batch = b;
    h = hh;
    w = ww;
    c = cc;
    data.resize(b * hh * ww, cc);
  }
  auto sample(Index b) { return data.middleRows(b * plane(), plane()); }
  auto sample(Index b) const { return data.middleRows(b * plane(), plane()); }
  // Rows-as-samples view (batch x h*w*c); valid because data is row-major.
  auto flat() { return Eigen::Map<RowMat<S>>(data.data(), batch, plane() * c); }
  auto flat() const {
    return Eigen::Map<const RowMat<S>>(data.data(), batch, plane() * c);
  }
};

// A learnable tensor with its gradient accumulator. `shape` is the logical
// shape used for serialization; `value` stores the same data as a row-major
// matrix chosen so that forward/backward are plain matrix products.
template <typename S>
struct Param {
  std::string name;
  RowMat<S> value;
  RowMat<S> grad;
  std::vector<Index> shape;
  bool decay = false;  // participates in L2 regularization

  Index count() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Non-learnable tensor exposed for checkpointing (e.g. BN running stats).
template <typename S>
struct StateRef {
  std::string name;
  RowMat<S>* value;
  std::vector<Index> shape;
};

// Per-layer scratch kept alive between forward and backward of one step.
template <typename S>
struct Cache {
  RowVec<S> mean, inv_std;  // batchnorm
  RowMat<S> mask;           // dropout
  ArgMat argmax;            // maxpool: flat spatial index per output cell
};

enum class LayerKind : uint8_t {
  Conv2D = 0,
  BatchNorm = 1,
  ReLU = 2,
  MaxPool = 3,
  Dense = 4,
  Dropout = 5,
  Softmax = 6,
};

template <typename S>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual void out_shape(Index h, Index w, Index c, Index& oh, Index& ow,
                         Index& oc) const = 0;
  // Eval-mode calls (train == false) leave the layer untouched and need no
  // cache or rng, so a frozen network can serve inference concurrently.
  virtual void forward(const FeatureBatch<S>& in, FeatureBatch<S>& out, bool train,
                       Cache<S>* cache, Rng* rng) = 0;
  virtual void backward(const FeatureBatch<S>& in, const FeatureBatch<S>& out,
                        const FeatureBatch<S>& grad_out, const Cache<S>& cache,
                        FeatureBatch<S>& grad_in) = 0;
  virtual std::vector<Param<S>*> params() { return {}; }
  virtual std::vector<StateRef<S>> state() { return {}; }
};

namespace detail {

template <typename S>
void check_finite(const RowMat<S>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

// Writes the full im2col matrix (h*w rows, kh*kw*cin columns) for one
// sample, zero-filling out-of-range positions. Every cell is written
// exactly once.
template <typename S>
void im2col(const Eigen::Ref<const RowMat<S>>& map, Index h, Index w, Index cin,
            Index kh, Index kw, RowMat<S>& col) {
  const Index ph = (kh - 1) / 2;
  const Index pw = (kw - 1) / 2;
  col.resize(h * w, kh * kw * cin);
  for (Index dy = 0; dy < kh; ++dy) {
    for (Index dx = 0; dx < kw; ++dx) {
      const Index off = (dy * kw + dx) * cin;
      const Index x0 = std::max<Index>(0, pw - dx);
      const Index x1 = std::min<Index>(w, w + pw - dx);
      for (Index y = 0; y < h; ++y) {
        const Index sy = y + dy - ph;
        if (sy < 0 || sy >= h) {
          col.block(y * w, off, w, cin).setZero();
          continue;
        }
        if (x0 > 0) col.block(y * w, off, x0, cin).setZero();
        if (x1 < w) col.block(y * w + x1, off, w - x1, cin).setZero();
        if (x1 > x0)
          col.block(y * w + x0, off, x1 - x0, cin) =
              map.middleRows(sy * w + x0 + dx - pw, x1 - x0);
      }
    }
  }
}

// Transpose of im2col: scatter-adds column gradients back onto the input.
template <typename S>
void col2im(const RowMat<S>& col, Index h, Index w, Index cin, Index kh, Index kw,
            Eigen::Ref<RowMat<S>> map) {
  const Index ph = (kh - 1) / 2;
  const Index pw = (kw - 1) / 2;
  for (Index dy = 0; dy < kh; ++dy) {
    for (Index dx = 0; dx < kw; ++dx) {
      const Index off = (dy * kw + dx) * cin;
      const Index x0 = std::max<Index>(0, pw - dx);
      const Index x1 = std::min<Index>(w, w + pw - dx);
      for (Index y = 0; y < h; ++y) {
        const Index sy = y + dy - ph;
        if (sy < 0 || sy >= h || x1 <= x0) continue;
        map.middleRows(sy * w + x0 + dx - pw, x1 - x0) +=
            col.block(y * w + x0, off, x1 - x0, cin);
      }
    }
  }
}

}  // namespace detail

// Same-padded stride-1 cross-correlation plus bias, via im2col and a
// single matrix product per sample.
template <typename S>
class Conv2D : public Layer<S> {
 public:
  Conv2D(Index kh, Index kw, Index cin, Index cout)
      : kh_(kh), kw_(kw), cin_(cin), cout_(cout) {
    w_.name = "w";
    w_.shape = {kh, kw, cin, cout};
    w_.value.setZero(kh * kw * cin, cout);
    w_.decay = true;
    b_.name = "b";
    b_.shape = {cout};
    b_.value.setZero(1, cout);
  }

  LayerKind kind() const override { return LayerKind::Conv2D; }
  std::string name() const override {
    return "conv" + std::to_string(kh_) + "x" + std::to_string(kw_);
  }
  void out_shape(Index h, Index w, Index c, Index& oh, Index& ow,
                 Index& oc) const override {
    oh = h;
    ow = w;
    oc = cout_;
    if (c != cin_) throw ShapeMismatch(name() + ": channel mismatch");
  }

  void forward(const FeatureBatch<S>& in, FeatureBatch<S>& out, bool, Cache<S>*,
               Rng*) override {
    if (in.c != cin_) throw ShapeMismatch(name() + ": channel mismatch");
    out.resize(in.batch, in.h, in.w, cout_);
    RowMat<S> col;
    for (Index b = 0; b < in.batch; ++b) {
      detail::im2col<S>(in.sample(b), in.h, in.w, cin_, kh_, kw_, col);
      out.sample(b).noalias() = col * w_.value;
      out.sample(b).rowwise() += b_.value.row(0);
    }
  }

  void backward(const FeatureBatch<S>& in, const FeatureBatch<S>&,
                const FeatureBatch<S>& grad_out, const Cache<S>&,
                FeatureBatch<S>& grad_in) override {
    grad_in.resize(in.batch, in.h, in.w, cin_);
    grad_in.data.setZero();
    RowMat<S> col, grad_col;
    for (Index b = 0; b < in.batch; ++b) {
      const auto g = grad_out.sample(b);
      b_.grad.row(0) += g.colwise().sum();
      detail::im2col<S>(in.sample(b), in.h, in.w, cin_, kh_, kw_, col);
      w_.grad.noalias() += col.transpose() * g;
      grad_col.noalias() = g * w_.value.transpose();
      detail::col2im<S>(grad_col, in.h, in.w, cin_, kh_, kw_, grad_in.sample(b));
    }
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }

  Param<S>& weight() { return w_; }
  Param<S>& bias() { return b_; }

 private:
  Index kh_, kw_, cin_, cout_;
  Param<S> w_, b_;
};

// Per-channel batch normalization over (batch, h, w) with running statistics
// for inference. Running stats are seeded from the first training batch and
// then tracked with momentum 0.99.
template <typename S>
class BatchNorm : public Layer<S> {
 public:
  explicit BatchNorm(Index channels) : channels_(channels) {
    gamma_.name = "gamma";
    gamma_.shape = {channels};
    gamma_.value.setOnes(1, channels);
    beta_.name = "beta";
    beta_.shape = {channels};
    beta_.value.setZero(1, channels);
    running_mean_.setZero(1, channels);
    running_var_.setOnes(1, channels);
    stats_count_.setZero(1, 1);
  }

  LayerKind kind() const override { return LayerKind::BatchNorm; }
  std::string name() const override { return "batchnorm"; }
  void out_shape(Index h, Index w, Index c, Index& oh, Index& ow,
                 Index& oc) const override {
    oh = h;
    ow = w;
    oc = c;
    if (c != channels_) throw ShapeMismatch("batchnorm: channel mismatch");
  }

  void forward(const FeatureBatch<S>& in, FeatureBatch<S>& out, bool train,
               Cache<S>* cache, Rng*) override {
    out.resize(in.batch, in.h, in.w, in.c);
    const auto n = static_cast<S>(in.data.rows());
    if (train) {
      RowVec<S> mean = in.data.colwise().mean();
      RowVec<S> var =
          ((in.data.rowwise() - mean).array().square().colwise().sum() / n)
              .matrix();
      RowVec<S> inv_std = (var.array() + eps_).rsqrt().matrix();
      if (cache) {
        cache->mean = mean;
        cache->inv_std = inv_std;
      }
      if (stats_count_(0, 0) == S(0)) {
        running_mean_ = mean;
        running_var_ = var;
      } else {
        running_mean_ = momentum_ * running_mean_ + (S(1) - momentum_) * mean;
        running_var_ = momentum_ * running_var_ + (S(1) - momentum_) * var;
      }
      stats_count_(0, 0) += S(1);
      const RowVec<S> scale =
          (inv_std.array() * gamma_.value.row(0).array()).matrix();
      out.data = (in.data.rowwise() - mean) * scale.asDiagonal();
      out.data.rowwise() += beta_.value.row(0);
    } else {
      const RowVec<S> inv_std =
          (running_var_.row(0).array() + eps_).rsqrt().matrix();
      const RowVec<S> scale =
          (inv_std.array() * gamma_.value.row(0).array()).matrix();
      out.data = (in.data.rowwise() - running_mean_.row(0)) * scale.asDiagonal();
      out.data.rowwise() += beta_.value.row(0);
    }
  }

  void backward(const FeatureBatch<S>& in, const FeatureBatch<S>&,
                const FeatureBatch<S>& grad_out, const Cache<S>& cache,
                FeatureBatch<S>& grad_in) override {
    const auto n = static_cast<S>(in.data.rows());
    const auto& g = grad_out.data;
    const RowVec<S> sum_g = g.colwise().sum();
    // x-hat is recomputed from the cached statistics instead of stored.
    RowMat<S> xhat = (in.data.rowwise() - cache.mean) * cache.inv_std.asDiagonal();
    const RowVec<S> sum_gx = (g.array() * xhat.array()).colwise().sum().matrix();

    gamma_.grad.row(0) += sum_gx;
    beta_.grad.row(0) += sum_g;

    grad_in.resize(in.batch, in.h, in.w, in.c);
    grad_in.data = n * g;
    grad_in.data.rowwise() -= sum_g;
    grad_in.data -= xhat * sum_gx.asDiagonal();
    const RowVec<S> scale =
        (gamma_.value.row(0).array() * cache.inv_std.array() / n).matrix();
    grad_in.data = grad_in.data * scale.asDiagonal();
  }

  std::vector<Param<S>*> params() override { return {&gamma_, &beta_}; }
  std::vector<StateRef<S>> state() override {
    return {{"running_mean", &running_mean_, {channels_}},
            {"running_var", &running_var_, {channels_}},
            {"stats_count", &stats_count_, {1}}};
  }

  const RowMat<S>& running_mean() const { return running_mean_; }
  const RowMat<S>& running_var() const { return running_var_; }

 private:
  Index channels_;
  S eps_ = S(1e-5);
  S momentum_ = S(0.99);
  Param<S> gamma_, beta_;
  RowMat<S> running_mean_, running_var_, stats_count_;
};

template <typename S>
class ReLU : public Layer<S> {
 public:
  LayerKind kind() const override { return LayerKind::ReLU; }
  std::string name() const override { return "relu"; }
  void out_shape(Index h, Index w, Index c, Index& oh, Index& ow,
                 Index& oc) const override {
    oh = h;
    ow = w;
    oc = c;
  }
  void forward(const FeatureBatch<S>& in, FeatureBatch<S>& out, bool, Cache<S>*,
               Rng*) override {
    out.resize(in.batch, in.h, in.w, in.c);
    out.data = in.data.cwiseMax(S(0));
  }
  void backward(const FeatureBatch<S>& in, const FeatureBatch<S>& out,
                const FeatureBatch<S>& grad_out, const Cache<S>&,
                FeatureBatch<S>& grad_in) override {
    grad_in.resize(in.batch, in.h, in.w, in.c);
    grad_in.data.array() =
        grad_out.data.array() * (out.data.array() > S(0)).template cast<S>();
  }
};

// Max pooling with kernel == stride and ceil-mode output sizes, so edge
// windows may be partial. Gradient routes to the argmax; ties break to the
// first element in row-major scan order.
template <typename S>
class MaxPool : public Layer<S> {
 public:
  MaxPool(Index kh, Index kw) : kh_(kh), kw_(kw) {}

  LayerKind kind() const override { return LayerKind::MaxPool; }
  std::string name() const override {
    return "maxpool" + std::to_string(kh_) + "x" + std::to_string(kw_);
  }
  void out_shape(Index h, Index w, Index c, Index& oh, Index& ow,
                 Index& oc) const override {
    oh = (h + kh_ - 1) / kh_;
    ow = (w + kw_ - 1) / kw_;
    oc = c;
  }

  void forward(const FeatureBatch<S>& in, FeatureBatch<S>& out, bool,
               Cache<S>* cache, Rng*) override {
    Index oh, ow, oc;
    out_shape(in.h, in.w, in.c, oh, ow, oc);
    out.resize(in.batch, oh, ow, oc);
    if (cache) cache->argmax.resize(out.data.rows(), out.data.cols());
    for (Index b = 0; b < in.batch; ++b) {
      const auto src = in.sample(b);
      for (Index oy = 0; oy < oh; ++oy) {
        const Index y1 = std::min(in.h, (oy + 1) * kh_);
        for (Index ox = 0; ox < ow; ++ox) {
          const Index x1 = std::min(in.w, (ox + 1) * kw_);
          const Index orow = (b * oh + oy) * ow + ox;
          for (Index c = 0; c < in.c; ++c) {
            S best{};
            Index arg = -1;
            for (Index y = oy * kh_; y < y1; ++y) {
              for (Index x = ox * kw_; x < x1; ++x) {
                const S v = src(y * in.w + x, c);
                if (arg < 0 || v > best) {
                  best = v;
                  arg = y * in.w + x;
                }
              }
            }
            out.data(orow, c) = best;
            if (cache) cache->argmax(orow, c) = static_cast<int32_t>(arg);
          }
        }
      }
    }
  }

  void backward(const FeatureBatch<S>& in, const FeatureBatch<S>& out,
                const FeatureBatch<S>& grad_out, const Cache<S>& cache,
                FeatureBatch<S>& grad_in) override {
    grad_in.resize(in.batch, in.h, in.w, in.c);
    grad_in.data.setZero();
    const Index oplane = out.plane();
    for (Index b = 0; b < in.batch; ++b) {
      for (Index p = 0; p < oplane; ++p) {
        const Index orow = b * oplane + p;
        for (Index c = 0; c < in.c; ++c)
          grad_in.data(b * in.plane() + cache.argmax(orow, c), c) +=
              grad_out.data(orow, c);
      }
    }
  }

 private:
  Index kh_, kw_;
};

// Fully connected layer; accepts any (h, w, c) input and treats it as a
// flat vector of h*w*c features per sample.
template <typename S>
class Dense : public Layer<S> {
 public:
  Dense(Index in_features, Index out_features) : in_(in_features), out_(out_features) {
    w_.name = "w";
    w_.shape = {in_features, out_features};
    w_.value.setZero(in_features, out_features);
    w_.decay = true;
    b_.name = "b";
    b_.shape = {out_features};
    b_.value.setZero(1, out_features);
  }

  LayerKind kind() const override { return LayerKind::Dense; }
  std::string name() const override { return "dense" + std::to_string(out_); }
  void out_shape(Index h, Index w, Index c, Index& oh, Index& ow,
                 Index& oc) const override {
    if (h * w * c != in_) throw ShapeMismatch(name() + ": input size mismatch");
    oh = 1;
    ow = 1;
    oc = out_;
  }

  void forward(const FeatureBatch<S>& in, FeatureBatch<S>& out, bool, Cache<S>*,
               Rng*) override {
    if (in.plane() * in.c != in_)
      throw ShapeMismatch(name() + ": input size mismatch");
    out.resize(in.batch, 1, 1, out_);
    out.data.noalias() = in.flat() * w_.value;
    out.data.rowwise() += b_.value.row(0);
  }

  void backward(const FeatureBatch<S>& in, const FeatureBatch<S>&,
                const FeatureBatch<S>& grad_out, const Cache<S>&,
                FeatureBatch<S>& grad_in) override {
    const auto flat_in = in.flat();
    w_.grad.noalias() += flat_in.transpose() * grad_out.data;
    b_.grad.row(0) += grad_out.data.colwise().sum();
    grad_in.resize(in.batch, in.h, in.w, in.c);
    grad_in.flat().noalias() = grad_out.data * w_.value.transpose();
  }

  std::vector<Param<S>*> params() override { return {&w_, &b_}; }
  Param<S>& weight() { return w_; }

 private:
  Index in_, out_;
  Param<S> w_, b_;
};

// Inverted dropout: training zeroes activations with probability `rate`
// and scales survivors by 1/(1-rate); evaluation is the identity.
template <typename S>
class Dropout : public Layer<S> {
 public:
  explicit Dropout(double rate) : rate_(rate) {}

  LayerKind kind() const override { return LayerKind::Dropout; }
  std::string name() const override { return "dropout"; }
  void out_shape(Index h, Index w, Index c, Index& oh, Index& ow,
                 Index& oc) const override {
    oh = h;
    ow = w;
    oc = c;
  }

  void forward(const FeatureBatch<S>& in, FeatureBatch<S>& out, bool train,
               Cache<S>* cache, Rng* rng) override {
    out.resize(in.batch, in.h, in.w, in.c);
    if (!train || rate_ <= 0.0) {
      out.data = in.data;
      return;
    }
    if (!cache || !rng)
      throw UsageError("dropout: training forward needs a cache and rng");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto scale = static_cast<S>(1.0 / (1.0 - rate_));
    cache->mask.resize(in.data.rows(), in.data.cols());
    for (Index r = 0; r < in.data.rows(); ++r)
      for (Index c = 0; c < in.data.cols(); ++c)
        cache->mask(r, c) = u(*rng) >= rate_ ? scale : S(0);
    out.data.array() = in.data.array() * cache->mask.array();
  }

  void backward(const FeatureBatch<S>& in, const FeatureBatch<S>&,
                const FeatureBatch<S>& grad_out, const Cache<S>& cache,
                FeatureBatch<S>& grad_in) override {
    grad_in.resize(in.batch, in.h, in.w, in.c);
    if (cache.mask.size() == 0) {
      grad_in.data = grad_out.data;
      return;
    }
    grad_in.data.array() = grad_out.data.array() * cache.mask.array();
  }

  double rate() const { return rate_; }

 private:
  double rate_;
};

// Row-wise softmax with the usual max-shift stabilization.
template <typename S>
RowMat<S> softmax(const RowMat<S>& logits) {
  RowMat<S> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const S m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Mean cross entropy against (possibly soft) simplex labels, with the
// gradient w.r.t. the logits: (softmax - labels) / batch.
template <typename S>
std::pair<S, RowMat<S>> softmax_cross_entropy(const RowMat<S>& logits,
                                              const RowMat<S>& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols())
    throw ShapeMismatch("softmax_cross_entropy: logits/labels shape mismatch");
  const Index batch = logits.rows();
  RowMat<S> grad(batch, logits.cols());
  S loss = S(0);
  for (Index r = 0; r < batch; ++r) {
    const S m = logits.row(r).maxCoeff();
    const RowVec<S> shifted = (logits.row(r).array() - m).matrix();
    const RowVec<S> e = shifted.array().exp().matrix();
    const S sum = e.sum();
    loss -= (labels.row(r).array() * (shifted.array() - std::log(sum))).sum();
    grad.row(r) = e / sum - labels.row(r);
  }
  loss /= static_cast<S>(batch);
  grad /= static_cast<S>(batch);
  return {loss, std::move(grad)};
}

enum class Profile { Urban, Esc };

// Step of the staircase learning-rate schedule: 0.1 divided by 10 every 80
// epochs (Urban profile) or every 100 epochs (ESC profile).
inline double lr_schedule(int epoch, Profile profile) {
  const int step = profile == Profile::Urban ? 80 : 100;
  if (epoch < step) return 0.1;
  if (epoch < 2 * step) return 0.01;
  return 0.001;
}

// SGD with Nesterov momentum:
//   v <- mu*v - lr*g ; p <- p + mu*v - lr*g
// where g includes the L2 term l2*p for parameters flagged for decay.
template <typename S>
class SgdNesterov {
 public:
  explicit SgdNesterov(S momentum = S(0.9), S l2 = S(1e-4))
      : momentum_(momentum), l2_(l2) {}

  void step(const std::vector<Param<S>*>& params, S lr) {
    if (velocity_.empty()) {
      velocity_.reserve(params.size());
      for (auto* p : params)
        velocity_.push_back(RowMat<S>::Zero(p->value.rows(), p->value.cols()));
    }
    if (velocity_.size() != params.size())
      throw ShapeMismatch("optimizer state does not match parameter list");
    for (size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      RowMat<S> g = p->grad;
      if (p->decay) g += l2_ * p->value;
      auto& v = velocity_[i];
      v = momentum_ * v - lr * g;
      p->value += momentum_ * v - lr * g;
    }
  }

  S momentum() const { return momentum_; }
  S l2() const { return l2_; }

 private:
  S momentum_, l2_;
  std::vector<RowMat<S>> velocity_;
};

enum class ArchTag : uint8_t { Proposed = 0, Vgg10 = 1 };

// Activations and caches of one training-mode forward pass, retained so
// backward can replay the stack.
template <typename S>
struct ForwardPass {
  std::vector<FeatureBatch<S>> acts;  // acts[0] = input, acts[i+1] = layer i out
  std::vector<Cache<S>> caches;
};

template <typename S>
class Network {
 public:
  std::vector<std::unique_ptr<Layer<S>>> layers;
  Index in_h = 128, in_w = 128, in_c = 2;
  int n_classes = 0;
  ArchTag arch = ArchTag::Proposed;
  // Index of the layer whose output is the post-ReLU FC1 activation.
  int fc1_tap = -1;

  // Runs the stack. In training mode `pass` must be supplied and receives
  // the per-layer activations and caches needed by backward(). If
  // `fc1_out` is given, the tapped activation is copied there.
  RowMat<S> forward(const FeatureBatch<S>& input, bool train, ForwardPass<S>* pass,
                    Rng* rng, RowMat<S>* fc1_out = nullptr) const {
    if (train && !pass) throw UsageError("training forward needs a ForwardPass");
    FeatureBatch<S> ping, pong;
    const FeatureBatch<S>* cur = &input;
    if (pass) {
      pass->acts.clear();
      pass->acts.reserve(layers.size() + 1);
      pass->acts.push_back(input);
      pass->caches.assign(layers.size(), Cache<S>{});
    }
    for (size_t i = 0; i < layers.size(); ++i) {
      if (pass) {
        pass->acts.emplace_back();
        FeatureBatch<S>& out = pass->acts.back();
        const FeatureBatch<S>& in = pass->acts[pass->acts.size() - 2];
        layers[i]->forward(in, out, train, &pass->caches[i], rng);
        if (fc1_out && static_cast<int>(i) == fc1_tap) *fc1_out = out.data;
      } else {
        FeatureBatch<S>& out = (i % 2 == 0) ? ping : pong;
        layers[i]->forward(*cur, out, train, nullptr, rng);
        if (fc1_out && static_cast<int>(i) == fc1_tap) *fc1_out = out.data;
        cur = &out;
      }
    }
    RowMat<S> logits = pass ? pass->acts.back().data : cur->data;
    detail::check_finite(logits, "logits");
    return logits;
  }

  // Accumulates parameter gradients for the pass; callers zero grads first.
  void backward(ForwardPass<S>& pass, const RowMat<S>& grad_logits) const {
    FeatureBatch<S> grad = pass.acts.back();
    grad.data = grad_logits;
    FeatureBatch<S> grad_prev;
    for (size_t i = layers.size(); i-- > 0;) {
      layers[i]->backward(pass.acts[i], pass.acts[i + 1], grad, pass.caches[i],
                          grad_prev);
      std::swap(grad, grad_prev);
    }
  }

  std::vector<Param<S>*> params() const {
    std::vector<Param<S>*> out;
    for (const auto& l : layers)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  void zero_grads() const {
    for (auto* p : params()) p->zero_grad();
  }

  Index parameter_count() const {
    Index n = 0;
    for (auto* p : params()) n += p->count();
    return n;
  }

  // Shape of every layer boundary for a single sample, starting at the
  // input; entry i+1 is the output shape of layer i.
  std::vector<std::array<Index, 3>> shape_trace() const {
    std::vector<std::array<Index, 3>> out{{in_h, in_w, in_c}};
    Index h = in_h, w = in_w, c = in_c;
    for (const auto& l : layers) {
      Index oh, ow, oc;
      l->out_shape(h, w, c, oh, ow, oc);
      out.push_back({oh, ow, oc});
      h = oh;
      w = ow;
      c = oc;
    }
    return out;
  }
};

}  // namespace esc::nn

#endif  // ESC_NN_HPP
