#ifndef ESC_SYNTH_HPP
#define ESC_SYNTH_HPP

#include <string>

#include "esc/audio.hpp"
#include "esc/harness.hpp"

namespace esc {

// Desk-scale synthetic dataset: four acoustically distinct classes (steady
// tones, amplitude-modulated noise, click trains, linear chirps) used by
// the verification suites and the demo pipeline.
struct SynthSpec {
  int n_clips = 40;
  int n_folds = 5;
  int sample_rate = 44100;
  double duration_s = 1.6;
  uint64_t seed = 7;
};

inline const char* kSynthClassNames[4] = {"tone", "amnoise", "clicks", "chirp"};

// One clip of the given class with per-clip randomized parameters.
AudioClip make_synth_clip(int class_idx, int sample_rate, double duration_s,
                          Rng& rng);

// Writes WAV files plus a `manifest.csv` (path,label,fold) under dir.
// Clips rotate through the classes and folds so every fold is stratified.
// Returns the manifest path.
std::string write_synth_dataset(const std::string& dir, const SynthSpec& spec);

}  // namespace esc

#endif  // ESC_SYNTH_HPP
