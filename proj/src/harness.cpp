#include "esc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace esc {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string stem_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

void assign_class_indices(Manifest& m) {
  std::set<std::string> labels;
  for (const auto& r : m.rows) labels.insert(r.label);
  m.class_names.assign(labels.begin(), labels.end());
  for (auto& r : m.rows) {
    const auto it = std::lower_bound(m.class_names.begin(), m.class_names.end(),
                                     r.label);
    r.class_idx = static_cast<int>(it - m.class_names.begin());
    m.n_folds = std::max(m.n_folds, r.fold);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError(path + ": empty manifest");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "path" || header[1] != "label" ||
      header[2] != "fold")
    throw DataError(path + ": manifest header must be path,label,fold[,source]");
  const bool has_source = header.size() >= 4 && header[3] == "source";

  Manifest m;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() < 3)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 3+ fields");
    ManifestRow row;
    row.path = fields[0];
    row.label = fields[1];
    try {
      row.fold = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad fold index");
    }
    if (row.fold < 1)
      throw DataError(path + ":" + std::to_string(line_no) + ": fold must be >= 1");
    row.id = stem_of(row.path);
    row.source_id = has_source && !fields[3].empty() ? fields[3] : row.id;
    m.rows.push_back(std::move(row));
  }
  if (m.rows.empty()) throw DataError(path + ": manifest has no rows");
  assign_class_indices(m);
  return m;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << "path,label,fold,source\n";
  for (const auto& r : manifest.rows)
    f << r.path << ',' << r.label << ',' << r.fold << ',' << r.source_id << '\n';
  if (!f) throw DataError("short write: " + path);
}

void save_stats(const std::string& path, const StandardizeStats& stats) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write stats: " + path);
  f << "channel,mean,std\n";
  for (int c = 0; c < 2; ++c)
    f << c << ',' << format_double(stats.mean[c]) << ','
      << format_double(stats.stddev[c]) << '\n';
}

StandardizeStats load_stats(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open stats: " + path);
  std::string line;
  std::getline(f, line);
  StandardizeStats stats;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 3) throw DataError(path + ": malformed stats row");
    const int c = std::stoi(fields[0]);
    if (c < 0 || c > 1) throw DataError(path + ": channel out of range");
    stats.mean[c] = std::stod(fields[1]);
    stats.stddev[c] = std::stod(fields[2]);
  }
  return stats;
}

FeatureStore::FeatureStore(const Manifest& manifest) {
  for (const auto& row : manifest.rows) {
    if (by_id_.count(row.id)) continue;
    by_id_.emplace(row.id, read_escf(row.path).spectrogram);
  }
}

const Spectrogram& FeatureStore::get(const ManifestRow& row) const {
  const auto it = by_id_.find(row.id);
  if (it == by_id_.end())
    throw MissingFeatures("no features loaded for clip " + row.id);
  return it->second;
}

std::vector<const ManifestRow*> training_rows(const Manifest& manifest, int fold) {
  if (fold < 1 || fold > manifest.n_folds)
    throw FoldOutOfRange("fold " + std::to_string(fold) + " outside 1.." +
                         std::to_string(manifest.n_folds));
  std::vector<const ManifestRow*> out;
  for (const auto& r : manifest.rows)
    if (r.fold != fold) out.push_back(&r);
  return out;
}

std::vector<const ManifestRow*> validation_rows(const Manifest& manifest, int fold) {
  if (fold < 1 || fold > manifest.n_folds)
    throw FoldOutOfRange("fold " + std::to_string(fold) + " outside 1.." +
                         std::to_string(manifest.n_folds));
  std::vector<const ManifestRow*> out;
  for (const auto& r : manifest.rows)
    if (r.fold == fold && r.is_original()) out.push_back(&r);
  return out;
}

StandardizeStats compute_stats(const std::vector<FeatureTensor>& tensors) {
  if (tensors.empty()) throw EmptyDataset("compute_stats: no tensors");
  StandardizeStats stats;
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sumsq = 0.0;
    long count = 0;
    for (const auto& t : tensors) {
      const Eigen::MatrixXd& m = c == 0 ? t.channel0 : t.channel1;
      sum += m.sum();
      sumsq += m.squaredNorm();
      count += m.size();
    }
    const double mean = sum / count;
    const double var = std::max(0.0, sumsq / count - mean * mean);
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

Eigen::VectorXf flatten_standardized(const FeatureTensor& ft,
                                     const StandardizeStats& stats) {
  const Eigen::Index h = ft.channel0.rows();
  const Eigen::Index w = ft.channel0.cols();
  Eigen::VectorXf out(h * w * 2);
  for (Eigen::Index b = 0; b < h; ++b)
    for (Eigen::Index t = 0; t < w; ++t) {
      out[(b * w + t) * 2 + 0] = static_cast<float>(
          (ft.channel0(b, t) - stats.mean[0]) / stats.stddev[0]);
      out[(b * w + t) * 2 + 1] = static_cast<float>(
          (ft.channel1(b, t) - stats.mean[1]) / stats.stddev[1]);
    }
  return out;
}

Eigen::VectorXd predict_clip(const nn::Network<float>& net,
                             const std::vector<FeatureTensor>& segments,
                             const StandardizeStats& stats) {
  if (segments.empty()) throw NoSegments("predict_clip: clip has no segments");
  RowMatrixXf rows(static_cast<Eigen::Index>(segments.size()),
                   net.in_h * net.in_w * net.in_c);
  for (size_t i = 0; i < segments.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) =
        flatten_standardized(segments[i], stats).transpose();
  const nn::RowMat<float> probs = nn::softmax(forward_logits(net, rows, false));
  return probs.colwise().mean().transpose().cast<double>();
}

namespace {

struct ValClip {
  const ManifestRow* row;
  std::vector<FeatureTensor> segments;
};

double clip_accuracy(const nn::Network<float>& net, const StandardizeStats& stats,
                     const std::vector<ValClip>& clips) {
  if (clips.empty()) return 0.0;
  int correct = 0;
  for (const auto& clip : clips) {
    const Eigen::VectorXd probs = predict_clip(net, clip.segments, stats);
    Eigen::Index pred = 0;
    probs.maxCoeff(&pred);
    if (static_cast<int>(pred) == clip.row->class_idx) ++correct;
  }
  return static_cast<double>(correct) / clips.size();
}

}  // namespace

FoldResult train_fold(const Manifest& manifest, const FeatureStore& store, int fold,
                      const TrainSettings& settings) {
  const auto train = training_rows(manifest, fold);
  const auto val = validation_rows(manifest, fold);
  if (train.empty()) throw EmptyDataset("train_fold: no training rows");

  // Segment the stored spectrograms; a segment inherits its clip's label.
  std::vector<FeatureTensor> train_tensors;
  std::vector<int> train_labels;
  for (const auto* row : train) {
    auto tensors = tensors_from_spectrogram(store.get(*row), row->id,
                                            settings.features);
    for (auto& t : tensors) {
      train_tensors.push_back(std::move(t));
      train_labels.push_back(row->class_idx);
    }
  }
  const StandardizeStats stats = compute_stats(train_tensors);

  std::vector<Eigen::VectorXf> inputs;
  inputs.reserve(train_tensors.size());
  for (const auto& t : train_tensors) inputs.push_back(flatten_standardized(t, stats));

  std::vector<ValClip> val_clips;
  for (const auto* row : val)
    val_clips.push_back(
        {row, tensors_from_spectrogram(store.get(*row), row->id, settings.features)});

  ModelConfig mc = settings.model;
  mc.n_classes = manifest.n_classes();
  Rng rng(settings.seed + static_cast<uint64_t>(fold));
  FoldResult result{build_model<float>(mc, rng), stats, {}};
  nn::Network<float>& net = result.net;
  nn::SgdNesterov<float> optimizer(0.9f, static_cast<float>(mc.l2));

  const int n_classes = manifest.n_classes();
  const int epochs = settings.resolved_epochs();
  std::vector<int> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  nn::ForwardPass<float> pass;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = nn::lr_schedule(epoch, settings.profile);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    long correct = 0, seen = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(settings.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(settings.batch_size));
      const std::vector<int> chunk(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(end));
      MixupBatch batch = mix_with_primaries(inputs, train_labels, chunk, n_classes,
                                            settings.mixup, rng);
      const nn::RowMat<float> logits =
          forward_logits<float>(net, batch.inputs, true, &pass, &rng);
      auto [loss, grad] = nn::softmax_cross_entropy<float>(logits, batch.labels);
      if (!std::isfinite(loss))
        throw NumericError("train_fold: loss became non-finite");
      net.zero_grads();
      net.backward(pass, grad);
      optimizer.step(net.params(), static_cast<float>(lr));

      loss_sum += static_cast<double>(loss) * static_cast<double>(chunk.size());
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index pl, pt;
        logits.row(r).maxCoeff(&pl);
        batch.labels.row(r).maxCoeff(&pt);
        if (pl == pt) ++correct;
      }
      seen += static_cast<long>(chunk.size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    entry.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    entry.val_acc = clip_accuracy(net, stats, val_clips);
    result.log.push_back(entry);
  }
  return result;
}

EvalReport evaluate_fold(const nn::Network<float>& net, const StandardizeStats& stats,
                         const Manifest& manifest, const FeatureStore& store,
                         int fold, const FeatureConfig& features) {
  const auto val = validation_rows(manifest, fold);
  const int n = manifest.n_classes();
  EvalReport report;
  report.confusion = Eigen::MatrixXi::Zero(n, n);
  for (const auto* row : val) {
    const auto segments = tensors_from_spectrogram(store.get(*row), row->id, features);
    ClipPrediction p;
    p.clip_id = row->id;
    p.true_class = row->class_idx;
    p.probs = predict_clip(net, segments, stats);
    Eigen::Index pred = 0;
    p.probs.maxCoeff(&pred);
    p.predicted = static_cast<int>(pred);
    report.confusion(p.true_class, p.predicted) += 1;
    report.clips.push_back(std::move(p));
  }
  report.accuracy =
      report.clips.empty()
          ? 0.0
          : static_cast<double>(report.confusion.trace()) / report.clips.size();
  return report;
}

CrossValResult cross_validate(
    const Manifest& manifest, const FeatureStore& store,
    const TrainSettings& settings, int jobs,
    const std::function<void(int, const FoldResult&, const EvalReport&)>& on_fold) {
  const int k = manifest.n_folds;
  if (k < 2) throw UsageError("cross_validate: need at least two folds");
  CrossValResult result;
  result.reports.resize(static_cast<size_t>(k));

  auto run_fold = [&](int fold) {
    FoldResult fr = train_fold(manifest, store, fold, settings);
    EvalReport report =
        evaluate_fold(fr.net, fr.stats, manifest, store, fold, settings.features);
    return std::make_pair(std::move(fr), std::move(report));
  };

  if (jobs <= 1) {
    for (int fold = 1; fold <= k; ++fold) {
      auto [fr, report] = run_fold(fold);
      if (on_fold) on_fold(fold, fr, report);
      result.reports[static_cast<size_t>(fold - 1)] = std::move(report);
    }
  } else {
    std::vector<std::optional<std::pair<FoldResult, EvalReport>>> done(
        static_cast<size_t>(k));
    std::atomic<int> next{1};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const int fold = next.fetch_add(1);
        if (fold > k) return;
        try {
          done[static_cast<size_t>(fold - 1)] = run_fold(fold);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < std::min(jobs, k); ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    for (int fold = 1; fold <= k; ++fold) {
      auto& [fr, report] = *done[static_cast<size_t>(fold - 1)];
      if (on_fold) on_fold(fold, fr, report);
      result.reports[static_cast<size_t>(fold - 1)] = std::move(report);
    }
  }

  double sum = 0.0;
  for (const auto& r : result.reports) sum += r.accuracy;
  result.mean_accuracy = sum / k;
  return result;
}

Eigen::MatrixXd confusion_diff(const EvalReport& a, const EvalReport& b) {
  if (a.confusion.rows() != b.confusion.rows() ||
      a.confusion.cols() != b.confusion.cols())
    throw ShapeMismatch("confusion_diff: reports cover different class counts");
  Eigen::MatrixXd diff = (a.confusion - b.confusion).cast<double>();
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    const int count = a.confusion.row(i).sum();
    if (count > 0) diff.row(i) /= static_cast<double>(count);
  }
  return diff;
}

PcaEmbedding pca_embed(const Eigen::MatrixXd& features, int dims) {
  if (features.rows() < 3) throw UsageError("pca_embed: need at least 3 rows");
  if (dims < 1 || dims > features.cols())
    throw UsageError("pca_embed: invalid target dimension");
  const Eigen::RowVectorXd mean = features.colwise().mean();
  Eigen::MatrixXd centered = features.rowwise() - mean;
  const double total_var = centered.squaredNorm();
  if (total_var <= 0.0)
    throw DegenerateInput("pca_embed: input has zero variance");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  Eigen::MatrixXd basis = svd.matrixV().leftCols(dims);
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    Eigen::Index imax = 0;
    basis.col(j).cwiseAbs().maxCoeff(&imax);
    if (basis(imax, j) < 0.0) basis.col(j) = -basis.col(j);
  }

  PcaEmbedding out;
  out.projections = centered * basis;
  out.basis = basis;
  out.explained_variance.resize(dims);
  for (int j = 0; j < dims; ++j) {
    const double sv = svd.singularValues()[j];
    out.explained_variance[j] = sv * sv / total_var;
  }
  return out;
}

std::vector<std::pair<double, double>> alpha_sweep(const Manifest& manifest,
                                                   const FeatureStore& store,
                                                   const TrainSettings& settings,
                                                   const std::vector<double>& alphas,
                                                   int jobs) {
  std::vector<std::pair<double, double>> out;
  out.reserve(alphas.size());
  for (const double alpha : alphas) {
    TrainSettings s = settings;
    s.mixup.enabled = true;
    s.mixup.alpha = alpha;
    out.emplace_back(alpha, cross_validate(manifest, store, s, jobs).mean_accuracy);
  }
  return out;
}

void write_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write log: " + path);
  f << "epoch,lr,train_loss,train_acc,val_acc\n";
  for (const auto& e : log)
    f << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.train_loss)
      << ',' << format_double(e.train_acc) << ',' << format_double(e.val_acc)
      << '\n';
}

void write_predictions_csv(const std::string& path, const EvalReport& report,
                           const std::vector<std::string>& class_names) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write predictions: " + path);
  f << "clip_id,true,predicted";
  for (size_t c = 0; c < class_names.size(); ++c) f << ",prob_" << c;
  f << '\n';
  for (const auto& p : report.clips) {
    f << p.clip_id << ',' << class_names[static_cast<size_t>(p.true_class)] << ','
      << class_names[static_cast<size_t>(p.predicted)];
    for (Eigen::Index c = 0; c < p.probs.size(); ++c)
      f << ',' << format_double(p.probs[c]);
    f << '\n';
  }
}

EvalReport read_predictions_csv(const std::string& path,
                                std::vector<std::string>& class_names) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open predictions: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError(path + ": empty predictions file");

  struct RawRow {
    std::string id, true_label, pred_label;
    Eigen::VectorXd probs;
  };
  std::vector<RawRow> raw;
  std::set<std::string> labels;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() < 3) throw DataError(path + ": malformed prediction row");
    RawRow row;
    row.id = fields[0];
    row.true_label = fields[1];
    row.pred_label = fields[2];
    row.probs.resize(static_cast<Eigen::Index>(fields.size()) - 3);
    for (size_t i = 3; i < fields.size(); ++i)
      row.probs[static_cast<Eigen::Index>(i - 3)] = std::stod(fields[i]);
    labels.insert(row.true_label);
    labels.insert(row.pred_label);
    raw.push_back(std::move(row));
  }

  if (class_names.empty()) {
    class_names.assign(labels.begin(), labels.end());
  } else {
    for (const auto& l : labels)
      if (std::find(class_names.begin(), class_names.end(), l) == class_names.end())
        throw DataError(path + ": label '" + l + "' not present in other report");
  }
  auto index_of = [&](const std::string& l) {
    return static_cast<int>(std::find(class_names.begin(), class_names.end(), l) -
                            class_names.begin());
  };

  const int n = static_cast<int>(class_names.size());
  EvalReport report;
  report.confusion = Eigen::MatrixXi::Zero(n, n);
  for (const auto& row : raw) {
    ClipPrediction p;
    p.clip_id = row.id;
    p.true_class = index_of(row.true_label);
    p.predicted = index_of(row.pred_label);
    p.probs = row.probs;
    report.confusion(p.true_class, p.predicted) += 1;
    report.clips.push_back(std::move(p));
  }
  report.accuracy =
      report.clips.empty()
          ? 0.0
          : static_cast<double>(report.confusion.trace()) / report.clips.size();
  return report;
}

void write_confusion_csv(const std::string& path, const Eigen::MatrixXd& m,
                         const std::vector<std::string>& class_names) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write confusion: " + path);
  f << "true";
  for (const auto& name : class_names) f << ',' << name;
  f << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    f << class_names[static_cast<size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) f << ',' << format_double(m(i, j));
    f << '\n';
  }
}

}  // namespace esc
