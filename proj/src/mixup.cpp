#include "esc/mixup.hpp"

namespace esc {

double sample_lambda(double alpha, Rng& rng) {
  if (alpha <= 0.0) throw UsageError("sample_lambda: alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double g1 = gamma(rng);
  const double g2 = gamma(rng);
  const double sum = g1 + g2;
  // Both gamma draws can underflow to zero for small alpha.
  return sum > 0.0 ? g1 / sum : 0.5;
}

void mix_pair(const Eigen::VectorXf& xi, int yi, const Eigen::VectorXf& xj, int yj,
              double lambda, Eigen::Ref<Eigen::RowVectorXf> out_x,
              Eigen::Ref<Eigen::RowVectorXf> out_label) {
  const auto l = static_cast<float>(lambda);
  out_x = (l * xi + (1.0f - l) * xj).transpose();
  out_label.setZero();
  out_label[yi] += l;
  out_label[yj] += 1.0f - l;
}

namespace {

MixupBatch assemble(const std::vector<Eigen::VectorXf>& inputs,
                    const std::vector<int>& labels,
                    const std::vector<int>& primaries, bool draw_primary,
                    int n_classes, const MixupConfig& cfg, Rng& rng) {
  if (inputs.empty()) throw EmptyDataset("mixup: dataset is empty");
  if (inputs.size() != labels.size())
    throw ShapeMismatch("mixup: inputs and labels differ in length");
  if (n_classes < 2) throw UsageError("mixup: need at least two classes");

  const auto batch = static_cast<Eigen::Index>(primaries.size());
  const auto dim = inputs.front().size();
  std::uniform_int_distribution<size_t> pick(0, inputs.size() - 1);

  MixupBatch out;
  out.inputs.resize(batch, dim);
  out.labels.resize(batch, n_classes);
  out.lambdas.resize(static_cast<size_t>(batch));

  for (Eigen::Index b = 0; b < batch; ++b) {
    size_t i = draw_primary ? pick(rng) : static_cast<size_t>(primaries[b]);
    size_t j = i;
    double lambda = 1.0;
    if (cfg.enabled) {
      j = pick(rng);
      lambda = sample_lambda(cfg.alpha, rng);
    }
    mix_pair(inputs[i], labels[i], inputs[j], labels[j], lambda, out.inputs.row(b),
             out.labels.row(b));
    out.lambdas[static_cast<size_t>(b)] = lambda;
  }
  return out;
}

}  // namespace

MixupBatch mix_batch(const std::vector<Eigen::VectorXf>& inputs,
                     const std::vector<int>& labels, int batch_size, int n_classes,
                     const MixupConfig& cfg, Rng& rng) {
  std::vector<int> slots(static_cast<size_t>(batch_size), 0);
  return assemble(inputs, labels, slots, /*draw_primary=*/true, n_classes, cfg, rng);
}

MixupBatch mix_with_primaries(const std::vector<Eigen::VectorXf>& inputs,
                              const std::vector<int>& labels,
                              const std::vector<int>& primary_indices, int n_classes,
                              const MixupConfig& cfg, Rng& rng) {
  return assemble(inputs, labels, primary_indices, /*draw_primary=*/false, n_classes,
                  cfg, rng);
}

}  // namespace esc
