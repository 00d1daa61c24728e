#ifndef ESC_HARNESS_HPP
#define ESC_HARNESS_HPP

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "esc/features.hpp"
#include "esc/mixup.hpp"
#include "esc/model.hpp"

namespace esc {

// One manifest entry. `id` is the clip identifier derived from the file
// stem; `source_id` points at the original recording an augmented copy was
// made from (equal to `id` for originals).
struct ManifestRow {
  std::string path;
  std::string label;
  int class_idx = -1;
  int fold = 0;
  std::string id;
  std::string source_id;

  bool is_original() const { return id == source_id; }
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> class_names;  // sorted; position = class index
  int n_folds = 0;

  int n_classes() const { return static_cast<int>(class_names.size()); }
};

// CSV with header `path,label,fold` and an optional `source` column.
Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& manifest);

// Per-channel standardization parameters computed on training folds only.
struct StandardizeStats {
  double mean[2] = {0.0, 0.0};
  double stddev[2] = {1.0, 1.0};
};
void save_stats(const std::string& path, const StandardizeStats& stats);
StandardizeStats load_stats(const std::string& path);

// Loads every feature file referenced by a manifest once; shared read-only
// across folds.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(const Manifest& manifest);
  const Spectrogram& get(const ManifestRow& row) const;

 private:
  std::map<std::string, Spectrogram> by_id_;
};

struct TrainSettings {
  ModelConfig model;
  MixupConfig mixup;
  FeatureConfig features;
  nn::Profile profile = nn::Profile::Esc;
  int epochs = 0;  // 0 = profile default (200 Urban / 300 ESC)
  int batch_size = 200;
  uint64_t seed = 0;

  int resolved_epochs() const {
    if (epochs > 0) return epochs;
    return profile == nn::Profile::Urban ? 200 : 300;
  }
};

struct EpochLog {
  int epoch;
  double lr, train_loss, train_acc, val_acc;
};

struct FoldResult {
  nn::Network<float> net;
  StandardizeStats stats;
  std::vector<EpochLog> log;
};

struct ClipPrediction {
  std::string clip_id;
  int true_class = -1;
  int predicted = -1;
  Eigen::VectorXd probs;
};

struct EvalReport {
  std::vector<ClipPrediction> clips;
  Eigen::MatrixXi confusion;  // rows = true class, cols = predicted
  double accuracy = 0.0;
};

// Fold membership. Training uses every row outside the held-out fold,
// including augmented copies; validation uses only original clips of the
// held-out fold, so no derivative of a validation clip is ever trained on.
std::vector<const ManifestRow*> training_rows(const Manifest& manifest, int fold);
std::vector<const ManifestRow*> validation_rows(const Manifest& manifest, int fold);

// Flattens a feature tensor into band-major frame-middle channel-minor
// order after per-channel standardization.
Eigen::VectorXf flatten_standardized(const FeatureTensor& ft,
                                     const StandardizeStats& stats);
StandardizeStats compute_stats(const std::vector<FeatureTensor>& tensors);

// Mean of the per-segment softmax vectors; the clip label is its argmax.
Eigen::VectorXd predict_clip(const nn::Network<float>& net,
                             const std::vector<FeatureTensor>& segments,
                             const StandardizeStats& stats);

// Trains one fold: per epoch a shuffled pass over the training segments in
// batches (mixup partners drawn uniformly when enabled), SGD with the
// scheduled learning rate, and a clip-level validation accuracy.
FoldResult train_fold(const Manifest& manifest, const FeatureStore& store, int fold,
                      const TrainSettings& settings);

EvalReport evaluate_fold(const nn::Network<float>& net, const StandardizeStats& stats,
                         const Manifest& manifest, const FeatureStore& store,
                         int fold, const FeatureConfig& features);

struct CrossValResult {
  std::vector<EvalReport> reports;  // index = fold - 1
  double mean_accuracy = 0.0;
};

// Trains and evaluates every fold. `jobs` > 1 runs folds on a worker pool;
// each fold gets its own rng stream (seed + fold) either way. The optional
// callback receives each finished fold (called from the coordinating
// thread in fold order).
CrossValResult cross_validate(
    const Manifest& manifest, const FeatureStore& store,
    const TrainSettings& settings, int jobs = 1,
    const std::function<void(int, const FoldResult&, const EvalReport&)>& on_fold =
        {});

// Elementwise confusion difference (a - b), each row normalized by the
// true-class clip count of `a`.
Eigen::MatrixXd confusion_diff(const EvalReport& a, const EvalReport& b);

struct PcaEmbedding {
  Eigen::MatrixXd projections;         // n x dims
  Eigen::MatrixXd basis;               // cols = principal directions
  Eigen::VectorXd explained_variance;  // ratio per kept component
};

// Mean-centers the rows and projects onto the top right singular vectors.
// Sign convention: the largest-magnitude coefficient of each component is
// made positive.
PcaEmbedding pca_embed(const Eigen::MatrixXd& features, int dims = 2);

// Cross-validates once per alpha and reports (alpha, mean accuracy).
std::vector<std::pair<double, double>> alpha_sweep(const Manifest& manifest,
                                                   const FeatureStore& store,
                                                   const TrainSettings& settings,
                                                   const std::vector<double>& alphas,
                                                   int jobs = 1);

// CSV helpers. All floating-point output uses shortest round-trip decimal.
std::string format_double(double v);
void write_log_csv(const std::string& path, const std::vector<EpochLog>& log);
void write_predictions_csv(const std::string& path, const EvalReport& report,
                           const std::vector<std::string>& class_names);
EvalReport read_predictions_csv(const std::string& path,
                                std::vector<std::string>& class_names);
void write_confusion_csv(const std::string& path, const Eigen::MatrixXd& m,
                         const std::vector<std::string>& class_names);

}  // namespace esc

#endif  // ESC_HARNESS_HPP
