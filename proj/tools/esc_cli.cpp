// Command-line front end: featurize -> train/crossval -> evaluate/predict,
// plus the analysis commands (alpha-sweep, embed, confusion).
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "esc/config.hpp"
#include "esc/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void print_summary(ordered_json j, const std::string& status) {
  j["status"] = status;
  std::cout << j.dump() << std::endl;
}

std::string fold_dir(const esc::RunConfig& cfg, int fold) {
  return (fs::path(cfg.out_dir) / ("fold" + std::to_string(fold))).string();
}

void write_labels(const esc::RunConfig& cfg, const esc::Manifest& manifest) {
  std::ofstream f(fs::path(cfg.out_dir) / "labels.txt");
  for (const auto& name : manifest.class_names) f << name << '\n';
}

void write_fold_artifacts(const esc::RunConfig& cfg, int fold,
                          const esc::FoldResult& result) {
  const fs::path dir = fold_dir(cfg, fold);
  fs::create_directories(dir);
  esc::save_network((dir / "model.escw").string(), result.net);
  esc::save_stats((dir / "stats.csv").string(), result.stats);
  esc::write_log_csv((dir / "log.csv").string(), result.log);
}

struct ConfigCli {
  std::string config_path;
  esc::RunConfig overrides;
  CLI::App* cmd = nullptr;

  void attach(CLI::App* app) {
    cmd = app;
    app->add_option("--config", config_path, "key = value config file");
    app->add_option("--manifest", overrides.manifest, "manifest CSV");
    app->add_option("--out-dir", overrides.out_dir, "output directory");
    app->add_option("--feature", overrides.feature, "mel | gt");
    app->add_option("--arch", overrides.arch, "proposed | vgg10");
    app->add_option("--seed", overrides.seed, "RNG seed");
    app->add_option("--alpha", overrides.alpha, "mixup Beta shape");
    app->add_option("--mixup", overrides.mixup, "mixup on/off");
    app->add_option("--augment", overrides.augment, "augmentation on/off");
    app->add_option("--profile", overrides.profile, "urban | esc");
    app->add_option("--epochs", overrides.epochs, "epoch count (0 = profile)");
    app->add_option("--batch-size", overrides.batch_size, "mini-batch size");
    app->add_option("--folds", overrides.folds, "expected fold count");
    app->add_option("--silence-db", overrides.silence_db, "silence threshold");
    app->add_option("--jobs", overrides.jobs, "worker pool size for folds");
    app->add_option("--deterministic", overrides.deterministic,
                    "force single-threaded reproducible mode");
  }

  esc::RunConfig resolve(bool require_manifest = true) const {
    esc::RunConfig cfg;
    if (!config_path.empty()) cfg = esc::parse_config(config_path);
    const auto take = [&](const char* flag, auto member) {
      if (cmd->count(flag)) cfg.*member = overrides.*member;
    };
    take("--manifest", &esc::RunConfig::manifest);
    take("--out-dir", &esc::RunConfig::out_dir);
    take("--feature", &esc::RunConfig::feature);
    take("--arch", &esc::RunConfig::arch);
    take("--seed", &esc::RunConfig::seed);
    take("--alpha", &esc::RunConfig::alpha);
    take("--mixup", &esc::RunConfig::mixup);
    take("--augment", &esc::RunConfig::augment);
    take("--profile", &esc::RunConfig::profile);
    take("--epochs", &esc::RunConfig::epochs);
    take("--batch-size", &esc::RunConfig::batch_size);
    take("--folds", &esc::RunConfig::folds);
    take("--silence-db", &esc::RunConfig::silence_db);
    take("--jobs", &esc::RunConfig::jobs);
    take("--deterministic", &esc::RunConfig::deterministic);
    esc::RunConfig checked = cfg;
    esc::validate_config(checked, require_manifest);
    return checked;
  }
};

esc::Manifest load_feature_manifest(const esc::RunConfig& cfg) {
  esc::Manifest manifest = esc::load_manifest(cfg.manifest);
  if (cfg.folds != 0 && cfg.folds != manifest.n_folds)
    throw esc::DataError("config expects " + std::to_string(cfg.folds) +
                         " folds but manifest has " +
                         std::to_string(manifest.n_folds));
  return manifest;
}

// ---------------------------------------------------------------- featurize

int cmd_featurize(const ConfigCli& cli) {
  const esc::RunConfig cfg = cli.resolve();
  const esc::Manifest manifest = esc::load_manifest(cfg.manifest);
  fs::create_directories(cfg.out_dir);

  esc::FeatureConfig fcfg;
  fcfg.silence_threshold_db = cfg.silence_db;
  const esc::BandType kind = esc::band_type_of(cfg);
  const esc::Filterbank fb =
      kind == esc::BandType::LogMel
          ? esc::mel_filterbank(fcfg.n_bands, esc::kPipelineSampleRate, fcfg.n_fft)
          : esc::gammatone_filterbank(fcfg.n_bands, esc::kPipelineSampleRate,
                                      fcfg.n_fft);

  esc::Manifest out_manifest;
  int written = 0, failed = 0;
  for (size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    char base[64];
    std::snprintf(base, sizeof base, "c%04zu_%s", i, row.id.c_str());
    try {
      esc::AudioClip clip = esc::normalize(esc::load_wav(row.path));
      clip = esc::resample(clip, esc::kPipelineSampleRate);
      const std::string orig_id = std::string(base) + "__orig";

      std::vector<std::pair<std::string, esc::AudioClip>> variants;
      variants.emplace_back(orig_id, clip);
      if (cfg.augment)
        for (const auto& deform : esc::DeformSpec::default_set())
          variants.emplace_back(std::string(base) + "__" + deform.tag(),
                                esc::apply_deform(clip, deform));

      for (auto& [id, variant] : variants) {
        const std::string path = (fs::path(cfg.out_dir) / (id + ".escf")).string();
        esc::write_escf(path, esc::featurize_spectrogram(variant, fb, fcfg), id);
        esc::ManifestRow feature_row;
        feature_row.path = path;
        feature_row.label = row.label;
        feature_row.fold = row.fold;
        feature_row.id = id;
        feature_row.source_id = orig_id;
        out_manifest.rows.push_back(std::move(feature_row));
        ++written;
      }
    } catch (const esc::Error& e) {
      std::cerr << "featurize: " << row.path << ": " << e.what() << '\n';
      ++failed;
    }
  }
  if (out_manifest.rows.empty())
    throw esc::DataError("featurize: no clips could be processed");
  const std::string out_manifest_path =
      (fs::path(cfg.out_dir) / "features.csv").string();
  esc::save_manifest(out_manifest_path, out_manifest);

  print_summary({{"cmd", "featurize"},
                 {"clips", manifest.rows.size()},
                 {"files", written},
                 {"failed", failed},
                 {"manifest", out_manifest_path}},
                failed == 0 ? "ok" : "partial");
  return failed == 0 ? 0 : 2;
}

// -------------------------------------------------------------------- train

int cmd_train(const ConfigCli& cli, int fold) {
  const esc::RunConfig cfg = cli.resolve();
  const esc::Manifest manifest = load_feature_manifest(cfg);
  const esc::FeatureStore store(manifest);
  const esc::TrainSettings settings = esc::to_train_settings(cfg);

  const esc::FoldResult result = esc::train_fold(manifest, store, fold, settings);
  fs::create_directories(cfg.out_dir);
  write_labels(cfg, manifest);
  write_fold_artifacts(cfg, fold, result);

  print_summary({{"cmd", "train"},
                 {"fold", fold},
                 {"epochs", settings.resolved_epochs()},
                 {"train_loss", result.log.back().train_loss},
                 {"val_acc", result.log.back().val_acc},
                 {"checkpoint", fold_dir(cfg, fold) + "/model.escw"}},
                "ok");
  return 0;
}

// ----------------------------------------------------------------- crossval

int cmd_crossval(const ConfigCli& cli) {
  const esc::RunConfig cfg = cli.resolve();
  const esc::Manifest manifest = load_feature_manifest(cfg);
  const esc::FeatureStore store(manifest);
  const esc::TrainSettings settings = esc::to_train_settings(cfg);
  fs::create_directories(cfg.out_dir);
  write_labels(cfg, manifest);

  const auto result = esc::cross_validate(
      manifest, store, settings, cfg.jobs,
      [&](int fold, const esc::FoldResult& fr, const esc::EvalReport& report) {
        write_fold_artifacts(cfg, fold, fr);
        esc::write_predictions_csv(
            (fs::path(fold_dir(cfg, fold)) / "predictions.csv").string(), report,
            manifest.class_names);
      });

  // fold summary + pooled confusion over all validation clips
  std::ofstream summary(fs::path(cfg.out_dir) / "crossval_summary.csv");
  summary << "fold,accuracy\n";
  esc::EvalReport pooled;
  const int n = manifest.n_classes();
  pooled.confusion = Eigen::MatrixXi::Zero(n, n);
  for (size_t i = 0; i < result.reports.size(); ++i) {
    summary << (i + 1) << ',' << esc::format_double(result.reports[i].accuracy)
            << '\n';
    pooled.confusion += result.reports[i].confusion;
    for (const auto& clip : result.reports[i].clips) pooled.clips.push_back(clip);
  }
  summary << "mean," << esc::format_double(result.mean_accuracy) << '\n';
  esc::write_predictions_csv((fs::path(cfg.out_dir) / "predictions.csv").string(),
                             pooled, manifest.class_names);
  esc::write_confusion_csv((fs::path(cfg.out_dir) / "confusion.csv").string(),
                           pooled.confusion.cast<double>(), manifest.class_names);

  std::printf("mean accuracy %.4f\n", result.mean_accuracy);
  ordered_json folds_json = ordered_json::array();
  for (const auto& r : result.reports) folds_json.push_back(r.accuracy);
  print_summary({{"cmd", "crossval"},
                 {"folds", manifest.n_folds},
                 {"fold_accuracy", folds_json},
                 {"mean_accuracy", result.mean_accuracy}},
                "ok");
  return 0;
}

// ----------------------------------------------------------------- evaluate

int cmd_evaluate(const ConfigCli& cli, int fold, std::string checkpoint,
                 std::string stats_path) {
  const esc::RunConfig cfg = cli.resolve();
  const esc::Manifest manifest = load_feature_manifest(cfg);
  const esc::FeatureStore store(manifest);
  if (checkpoint.empty())
    checkpoint = (fs::path(fold_dir(cfg, fold)) / "model.escw").string();
  if (stats_path.empty())
    stats_path = (fs::path(fold_dir(cfg, fold)) / "stats.csv").string();

  const esc::nn::Network<float> net = esc::load_network(checkpoint);
  if (net.n_classes != manifest.n_classes())
    throw esc::DataError("checkpoint class count does not match manifest");
  const esc::StandardizeStats stats = esc::load_stats(stats_path);
  const esc::TrainSettings settings = esc::to_train_settings(cfg);

  const esc::EvalReport report =
      esc::evaluate_fold(net, stats, manifest, store, fold, settings.features);
  fs::create_directories(cfg.out_dir);
  const std::string tag = "eval_fold" + std::to_string(fold);
  esc::write_predictions_csv(
      (fs::path(cfg.out_dir) / (tag + "_predictions.csv")).string(), report,
      manifest.class_names);
  esc::write_confusion_csv(
      (fs::path(cfg.out_dir) / (tag + "_confusion.csv")).string(),
      report.confusion.cast<double>(), manifest.class_names);

  print_summary({{"cmd", "evaluate"},
                 {"fold", fold},
                 {"clips", report.clips.size()},
                 {"accuracy", report.accuracy}},
                "ok");
  return 0;
}

// ------------------------------------------------------------------ predict

int cmd_predict(const std::string& checkpoint, const std::string& stats_path,
                const std::string& labels_path,
                const std::vector<std::string>& feature_files) {
  const esc::nn::Network<float> net = esc::load_network(checkpoint);
  const esc::StandardizeStats stats = esc::load_stats(stats_path);
  std::vector<std::string> labels;
  if (!labels_path.empty()) {
    std::ifstream f(labels_path);
    if (!f) throw esc::DataError("cannot open labels: " + labels_path);
    std::string line;
    while (std::getline(f, line))
      if (!line.empty()) labels.push_back(line);
  }
  if (labels.empty())
    for (int c = 0; c < net.n_classes; ++c) labels.push_back(std::to_string(c));
  if (static_cast<int>(labels.size()) != net.n_classes)
    throw esc::DataError("label count does not match checkpoint classes");

  esc::FeatureConfig fcfg;
  for (const auto& path : feature_files) {
    const esc::EscfFile file = esc::read_escf(path);
    const auto segments =
        esc::tensors_from_spectrogram(file.spectrogram, file.clip_id, fcfg);
    const Eigen::VectorXd probs = esc::predict_clip(net, segments, stats);
    Eigen::Index pred = 0;
    probs.maxCoeff(&pred);
    std::cout << file.clip_id << ',' << labels[static_cast<size_t>(pred)];
    for (Eigen::Index c = 0; c < probs.size(); ++c)
      std::cout << ',' << esc::format_double(probs[c]);
    std::cout << '\n';
  }
  print_summary({{"cmd", "predict"}, {"clips", feature_files.size()}}, "ok");
  return 0;
}

// -------------------------------------------------------------- alpha sweep

int cmd_alpha_sweep(const ConfigCli& cli, std::vector<double> alphas) {
  const esc::RunConfig cfg = cli.resolve();
  const esc::Manifest manifest = load_feature_manifest(cfg);
  const esc::FeatureStore store(manifest);
  const esc::TrainSettings settings = esc::to_train_settings(cfg);
  if (alphas.empty()) alphas = {0.1, 0.2, 0.3, 0.4, 0.5};

  const auto rows = esc::alpha_sweep(manifest, store, settings, alphas, cfg.jobs);
  fs::create_directories(cfg.out_dir);
  const std::string out_path = (fs::path(cfg.out_dir) / "alpha_sweep.csv").string();
  std::ofstream f(out_path);
  f << "alpha,mean_accuracy\n";
  for (const auto& [alpha, acc] : rows)
    f << esc::format_double(alpha) << ',' << esc::format_double(acc) << '\n';

  ordered_json table = ordered_json::array();
  for (const auto& [alpha, acc] : rows) table.push_back({{"alpha", alpha}, {"acc", acc}});
  print_summary({{"cmd", "alpha_sweep"}, {"table", table}, {"csv", out_path}}, "ok");
  return 0;
}

// -------------------------------------------------------------------- embed

int cmd_embed(const ConfigCli& cli, std::string checkpoint, std::string stats_path,
              int fold, std::string out_path) {
  const esc::RunConfig cfg = cli.resolve();
  const esc::Manifest manifest = load_feature_manifest(cfg);
  const esc::FeatureStore store(manifest);
  if (checkpoint.empty())
    checkpoint = (fs::path(fold_dir(cfg, fold)) / "model.escw").string();
  if (stats_path.empty())
    stats_path = (fs::path(fold_dir(cfg, fold)) / "stats.csv").string();
  if (out_path.empty())
    out_path = (fs::path(cfg.out_dir) / "embedding.csv").string();

  const esc::nn::Network<float> net = esc::load_network(checkpoint);
  const esc::StandardizeStats stats = esc::load_stats(stats_path);
  const esc::TrainSettings settings = esc::to_train_settings(cfg);

  // FC1 features for every segment of every original clip.
  std::vector<std::string> ids, labels;
  std::vector<Eigen::VectorXf> rows;
  for (const auto& row : manifest.rows) {
    if (!row.is_original()) continue;
    for (const auto& t :
         esc::tensors_from_spectrogram(store.get(row), row.id, settings.features)) {
      rows.push_back(esc::flatten_standardized(t, stats));
      ids.push_back(row.id);
      labels.push_back(row.label);
    }
  }
  if (rows.empty()) throw esc::DataError("embed: manifest yields no segments");
  esc::RowMatrixXf batch(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i)
    batch.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();

  const auto fc1 = esc::extract_fc1(net, batch).cast<double>().eval();
  const esc::PcaEmbedding embedding = esc::pca_embed(Eigen::MatrixXd(fc1), 2);

  fs::create_directories(fs::path(out_path).parent_path());
  std::ofstream f(out_path);
  f << "clip_id,x,y,true_label\n";
  for (size_t i = 0; i < ids.size(); ++i)
    f << ids[i] << ','
      << esc::format_double(embedding.projections(static_cast<Eigen::Index>(i), 0))
      << ','
      << esc::format_double(embedding.projections(static_cast<Eigen::Index>(i), 1))
      << ',' << labels[i] << '\n';

  print_summary({{"cmd", "embed"},
                 {"segments", ids.size()},
                 {"explained_variance",
                  {embedding.explained_variance[0], embedding.explained_variance[1]}},
                 {"csv", out_path}},
                "ok");
  return 0;
}

// ---------------------------------------------------------------- confusion

int cmd_confusion(const std::string& a_path, const std::string& b_path,
                  const std::string& out_path) {
  std::vector<std::string> class_names;
  const esc::EvalReport a = esc::read_predictions_csv(a_path, class_names);
  const esc::EvalReport b = esc::read_predictions_csv(b_path, class_names);
  const Eigen::MatrixXd diff = esc::confusion_diff(a, b);
  esc::write_confusion_csv(out_path, diff, class_names);
  print_summary({{"cmd", "confusion"},
                 {"a", a_path},
                 {"b", b_path},
                 {"max_abs_diff", diff.cwiseAbs().maxCoeff()},
                 {"csv", out_path}},
                "ok");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Environmental sound classification pipeline"};
  app.require_subcommand(1);

  ConfigCli featurize_cli, train_cli, crossval_cli, sweep_cli, embed_cli, eval_cli;

  auto* featurize = app.add_subcommand("featurize", "extract ESCF feature files");
  featurize_cli.attach(featurize);

  auto* train = app.add_subcommand("train", "train one fold");
  int train_fold_idx = 1;
  train->add_option("--fold", train_fold_idx, "held-out fold index")->required();
  train_cli.attach(train);

  auto* crossval = app.add_subcommand("crossval", "run full k-fold cross-validation");
  crossval_cli.attach(crossval);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a trained fold");
  int eval_fold_idx = 1;
  std::string eval_checkpoint, eval_stats;
  evaluate->add_option("--fold", eval_fold_idx, "held-out fold index")->required();
  evaluate->add_option("--checkpoint", eval_checkpoint, "ESCW checkpoint path");
  evaluate->add_option("--stats", eval_stats, "standardization stats path");
  eval_cli.attach(evaluate);

  auto* predict = app.add_subcommand("predict", "predict labels for feature files");
  std::string pred_checkpoint, pred_stats, pred_labels;
  std::vector<std::string> pred_files;
  predict->add_option("--checkpoint", pred_checkpoint)->required();
  predict->add_option("--stats", pred_stats)->required();
  predict->add_option("--labels", pred_labels, "labels.txt from training");
  predict->add_option("files", pred_files, "ESCF feature files")->required();

  auto* sweep = app.add_subcommand("alpha-sweep", "cross-validate over mixup alphas");
  std::vector<double> sweep_alphas;
  sweep->add_option("--alphas", sweep_alphas, "alpha grid");
  sweep_cli.attach(sweep);

  auto* embed = app.add_subcommand("embed", "export the PCA embedding of FC1");
  std::string embed_checkpoint, embed_stats, embed_out;
  int embed_fold = 1;
  embed->add_option("--checkpoint", embed_checkpoint);
  embed->add_option("--stats", embed_stats);
  embed->add_option("--fold", embed_fold, "fold whose artifacts to use");
  embed->add_option("--out", embed_out, "output CSV");
  embed_cli.attach(embed);

  auto* confusion = app.add_subcommand("confusion", "confusion difference of reports");
  std::string conf_a, conf_b, conf_out;
  confusion->add_option("--a", conf_a, "predictions CSV (report a)")->required();
  confusion->add_option("--b", conf_b, "predictions CSV (report b)")->required();
  confusion->add_option("--out", conf_out, "output CSV")->required();

  auto* synth = app.add_subcommand("synth", "generate the synthetic demo dataset");
  esc::SynthSpec synth_spec;
  std::string synth_dir;
  synth->add_option("--out-dir", synth_dir)->required();
  synth->add_option("--clips", synth_spec.n_clips);
  synth->add_option("--folds", synth_spec.n_folds);
  synth->add_option("--seed", synth_spec.seed);
  synth->add_option("--sample-rate", synth_spec.sample_rate);
  synth->add_option("--duration", synth_spec.duration_s);

  std::string active = "none";
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 1;  // usage errors exit 1
    }
    if (featurize->parsed()) {
      active = "featurize";
      return cmd_featurize(featurize_cli);
    }
    if (train->parsed()) {
      active = "train";
      return cmd_train(train_cli, train_fold_idx);
    }
    if (crossval->parsed()) {
      active = "crossval";
      return cmd_crossval(crossval_cli);
    }
    if (evaluate->parsed()) {
      active = "evaluate";
      return cmd_evaluate(eval_cli, eval_fold_idx, eval_checkpoint, eval_stats);
    }
    if (predict->parsed()) {
      active = "predict";
      return cmd_predict(pred_checkpoint, pred_stats, pred_labels, pred_files);
    }
    if (sweep->parsed()) {
      active = "alpha_sweep";
      return cmd_alpha_sweep(sweep_cli, sweep_alphas);
    }
    if (embed->parsed()) {
      active = "embed";
      return cmd_embed(embed_cli, embed_checkpoint, embed_stats, embed_fold,
                       embed_out);
    }
    if (confusion->parsed()) {
      active = "confusion";
      return cmd_confusion(conf_a, conf_b, conf_out);
    }
    if (synth->parsed()) {
      active = "synth";
      const std::string manifest = esc::write_synth_dataset(synth_dir, synth_spec);
      print_summary({{"cmd", "synth"},
                     {"clips", synth_spec.n_clips},
                     {"manifest", manifest}},
                    "ok");
      return 0;
    }
  } catch (const esc::UsageError& e) {
    print_summary({{"cmd", active}, {"error", e.what()}}, "usage_error");
    return 1;
  } catch (const esc::NumericError& e) {
    print_summary({{"cmd", active}, {"error", e.what()}}, "numeric_error");
    return 3;
  } catch (const esc::Error& e) {
    print_summary({{"cmd", active}, {"error", e.what()}}, "data_error");
    return 2;
  } catch (const std::exception& e) {
    print_summary({{"cmd", active}, {"error", e.what()}}, "data_error");
    return 2;
  }
  return 0;
}
