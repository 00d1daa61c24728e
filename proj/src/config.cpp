#include "esc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace esc {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "on" || v == "true" || v == "1") {
    out = true;
    return true;
  }
  if (v == "off" || v == "false" || v == "0") {
    out = false;
    return true;
  }
  return false;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw UsageError(origin + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) fail(origin, line_no, "expected `key = value`");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) fail(origin, line_no, "empty key");

    try {
      if (key == "feature") {
        if (value != "mel" && value != "gt")
          fail(origin, line_no, "feature must be mel or gt");
        cfg.feature = value;
      } else if (key == "arch") {
        if (value != "proposed" && value != "vgg10")
          fail(origin, line_no, "arch must be proposed or vgg10");
        cfg.arch = value;
      } else if (key == "mixup") {
        if (!parse_bool(value, cfg.mixup)) fail(origin, line_no, "mixup must be on/off");
      } else if (key == "alpha") {
        cfg.alpha = std::stod(value);
        if (cfg.alpha <= 0.0) fail(origin, line_no, "alpha must be positive");
      } else if (key == "augment") {
        if (!parse_bool(value, cfg.augment))
          fail(origin, line_no, "augment must be on/off");
      } else if (key == "profile") {
        if (value != "urban" && value != "esc")
          fail(origin, line_no, "profile must be urban or esc");
        cfg.profile = value;
      } else if (key == "seed") {
        cfg.seed = std::stoll(value);
        if (cfg.seed < 0) fail(origin, line_no, "seed must be non-negative");
      } else if (key == "manifest") {
        cfg.manifest = value;
      } else if (key == "out_dir") {
        cfg.out_dir = value;
      } else if (key == "epochs") {
        cfg.epochs = std::stoi(value);
        if (cfg.epochs < 0) fail(origin, line_no, "epochs must be >= 0");
      } else if (key == "batch_size") {
        cfg.batch_size = std::stoi(value);
        if (cfg.batch_size < 1) fail(origin, line_no, "batch_size must be >= 1");
      } else if (key == "folds") {
        cfg.folds = std::stoi(value);
        if (cfg.folds < 0) fail(origin, line_no, "folds must be >= 0");
      } else if (key == "silence_db") {
        cfg.silence_db = std::stod(value);
        if (cfg.silence_db < 0.0) fail(origin, line_no, "silence_db must be >= 0");
      } else if (key == "jobs") {
        cfg.jobs = std::stoi(value);
        if (cfg.jobs < 1) fail(origin, line_no, "jobs must be >= 1");
      } else if (key == "deterministic") {
        if (!parse_bool(value, cfg.deterministic))
          fail(origin, line_no, "deterministic must be on/off");
      } else {
        fail(origin, line_no, "unknown key '" + key + "'");
      }
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      fail(origin, line_no, "bad value for key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  const auto onoff = [](bool b) { return b ? "on" : "off"; };
  out << "feature = " << cfg.feature << '\n';
  out << "arch = " << cfg.arch << '\n';
  out << "mixup = " << onoff(cfg.mixup) << '\n';
  out << "alpha = " << format_double(cfg.alpha) << '\n';
  out << "augment = " << onoff(cfg.augment) << '\n';
  out << "profile = " << cfg.profile << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "manifest = " << cfg.manifest << '\n';
  out << "out_dir = " << cfg.out_dir << '\n';
  out << "epochs = " << cfg.epochs << '\n';
  out << "batch_size = " << cfg.batch_size << '\n';
  out << "folds = " << cfg.folds << '\n';
  out << "silence_db = " << format_double(cfg.silence_db) << '\n';
  out << "jobs = " << cfg.jobs << '\n';
  out << "deterministic = " << onoff(cfg.deterministic) << '\n';
  return out.str();
}

void validate_config(RunConfig& cfg, bool require_manifest) {
  if (cfg.seed < 0) {
    if (const char* env = std::getenv("ESC_SEED")) {
      try {
        cfg.seed = std::stoll(env);
      } catch (const std::exception&) {
        throw UsageError("ESC_SEED is not a valid integer");
      }
    }
  }
  if (cfg.seed < 0) throw UsageError("missing required key 'seed'");
  if (require_manifest && cfg.manifest.empty())
    throw UsageError("missing required key 'manifest'");
  if (cfg.out_dir.empty()) throw UsageError("missing required key 'out_dir'");
  if (cfg.deterministic) cfg.jobs = 1;
}

TrainSettings to_train_settings(const RunConfig& cfg) {
  TrainSettings s;
  s.model.arch = cfg.arch == "vgg10" ? nn::ArchTag::Vgg10 : nn::ArchTag::Proposed;
  s.mixup.enabled = cfg.mixup;
  s.mixup.alpha = cfg.alpha;
  s.features.silence_threshold_db = cfg.silence_db;
  s.profile = cfg.profile == "urban" ? nn::Profile::Urban : nn::Profile::Esc;
  s.epochs = cfg.epochs;
  s.batch_size = cfg.batch_size;
  s.seed = static_cast<uint64_t>(cfg.seed);
  return s;
}

BandType band_type_of(const RunConfig& cfg) {
  return cfg.feature == "gt" ? BandType::LogGammatone : BandType::LogMel;
}

}  // namespace esc
