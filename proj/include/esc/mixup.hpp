#ifndef ESC_MIXUP_HPP
#define ESC_MIXUP_HPP

#include <Eigen/Dense>
#include <vector>

#include "esc/common.hpp"

namespace esc {

using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MixupConfig {
  double alpha = 0.2;
  bool enabled = true;
};

// A training mini-batch of mixed inputs. `inputs` holds one flattened
// segment per row; `labels` rows are convex combinations of one-hot
// vectors; `lambdas` records the draw behind each row for audit.
struct MixupBatch {
  RowMatrixXf inputs;
  RowMatrixXf labels;
  std::vector<double> lambdas;
};

// One draw from Beta(alpha, alpha) via two Gamma(alpha, 1) variates.
double sample_lambda(double alpha, Rng& rng);

// Mixes a single pair: out_x = l*xi + (1-l)*xj, label = l*onehot(yi) +
// (1-l)*onehot(yj).
void mix_pair(const Eigen::VectorXf& xi, int yi, const Eigen::VectorXf& xj, int yj,
              double lambda, Eigen::Ref<Eigen::RowVectorXf> out_x,
              Eigen::Ref<Eigen::RowVectorXf> out_label);

// Forms a batch by drawing both elements of every pair uniformly with
// replacement. With cfg.enabled == false this degenerates to plain
// sampling (lambda fixed at 1, one-hot labels).
MixupBatch mix_batch(const std::vector<Eigen::VectorXf>& inputs,
                     const std::vector<int>& labels, int batch_size, int n_classes,
                     const MixupConfig& cfg, Rng& rng);

// Batch former for the training loop: the first element of each pair is
// given (one shuffled pass over the epoch), the partner is drawn uniformly
// from the whole set.
MixupBatch mix_with_primaries(const std::vector<Eigen::VectorXf>& inputs,
                              const std::vector<int>& labels,
                              const std::vector<int>& primary_indices, int n_classes,
                              const MixupConfig& cfg, Rng& rng);

}  // namespace esc

#endif  // ESC_MIXUP_HPP
