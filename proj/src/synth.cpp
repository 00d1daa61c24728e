#include "esc/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace esc {

namespace {
constexpr double kPi = std::numbers::pi;
}

AudioClip make_synth_clip(int class_idx, int sample_rate, double duration_s,
                          Rng& rng) {
  const auto n = static_cast<Eigen::Index>(std::lround(sample_rate * duration_s));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  const double dt = 1.0 / sample_rate;

  switch (class_idx % 4) {
    case 0: {  // steady tone with a little vibrato
      const double f = 300.0 + 400.0 * unit(rng);
      const double vib = 2.0 + 4.0 * unit(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = i * dt;
        clip.samples[i] =
            0.8 * std::sin(2.0 * kPi * f * t + 0.3 * std::sin(2.0 * kPi * vib * t));
      }
      break;
    }
    case 1: {  // amplitude-modulated noise
      const double fm = 2.0 + 6.0 * unit(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = i * dt;
        const double env = 0.55 + 0.45 * std::sin(2.0 * kPi * fm * t);
        clip.samples[i] = 0.5 * env * gauss(rng);
      }
      break;
    }
    case 2: {  // exponentially decaying click train over a faint noise bed
      const double period = 0.05 + 0.07 * unit(rng);
      const double decay = 600.0 + 400.0 * unit(rng);
      for (Eigen::Index i = 0; i < n; ++i)
        clip.samples[i] = 0.002 * gauss(rng);
      for (double t0 = 0.01; t0 < duration_s; t0 += period) {
        const auto i0 = static_cast<Eigen::Index>(t0 * sample_rate);
        for (Eigen::Index i = i0; i < std::min(n, i0 + sample_rate / 50); ++i) {
          const double dt0 = (i - i0) * dt;
          clip.samples[i] += 0.9 * std::exp(-decay * dt0) *
                             std::cos(2.0 * kPi * 3000.0 * dt0);
        }
      }
      break;
    }
    default: {  // linear chirp
      const double f0 = 200.0 + 200.0 * unit(rng);
      const double f1 = 2000.0 + 2000.0 * unit(rng);
      const double k = (f1 - f0) / duration_s;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = i * dt;
        clip.samples[i] = 0.8 * std::sin(2.0 * kPi * (f0 * t + 0.5 * k * t * t));
      }
      break;
    }
  }
  return clip;
}

std::string write_synth_dataset(const std::string& dir, const SynthSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(spec.seed);

  const std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
  std::ofstream manifest(manifest_path);
  if (!manifest) throw DataError("cannot write manifest: " + manifest_path);
  manifest << "path,label,fold\n";

  for (int i = 0; i < spec.n_clips; ++i) {
    const int cls = i % 4;
    const int fold = (i / 4) % spec.n_folds + 1;
    AudioClip clip = make_synth_clip(cls, spec.sample_rate, spec.duration_s, rng);
    char name[64];
    std::snprintf(name, sizeof name, "clip%03d_%s.wav", i, kSynthClassNames[cls]);
    const std::string path = (fs::path(dir) / name).string();
    save_wav(path, clip);
    manifest << path << ',' << kSynthClassNames[cls] << ',' << fold << '\n';
  }
  if (!manifest) throw DataError("short write: " + manifest_path);
  return manifest_path;
}

}  // namespace esc
