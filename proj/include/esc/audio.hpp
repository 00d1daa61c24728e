#ifndef ESC_AUDIO_HPP
#define ESC_AUDIO_HPP

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "esc/common.hpp"

namespace esc {

// Mono waveform plus provenance. Samples are dimensionless amplitudes;
// the pipeline keeps them in [-1, 1] after normalize().
struct AudioClip {
  Eigen::VectorXd samples;
  int sample_rate = 0;
  std::string source_id;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class DeformKind { TimeStretch, PitchShift };

// One audio deformation. `amount` is a stretch rate for TimeStretch
// (0.5..2.0) and a signed semitone count for PitchShift (|s| <= 12).
struct DeformSpec {
  DeformKind kind;
  double amount;

  std::string tag() const;
  // The stretch rates and semitone shifts used when expanding a dataset.
  static const std::vector<DeformSpec>& default_set();
};

// RIFF/WAVE reader. Accepts PCM16 and IEEE float32, 1 or 2 channels;
// stereo is downmixed by per-sample average, PCM16 is scaled by 1/32768.
AudioClip load_wav(const std::string& path);

// PCM16 writer used by the synthetic-dataset tools and tests.
void save_wav(const std::string& path, const AudioClip& clip);

// Peak normalization into [-1, 1]. All-zero input is returned unchanged,
// and the operation is bitwise idempotent.
AudioClip normalize(const AudioClip& clip);

// Windowed-sinc resampler (32 taps, Hann window). Equal rates return the
// input unchanged. Output length = round(len * target / source).
AudioClip resample(const AudioClip& clip, int target_rate);

// Phase-vocoder time stretch (window 2048, hop 512, identity phase
// locking). rate > 1 shortens the clip; output length = round(len / rate).
// Pitch is preserved. rate must lie in [0.5, 2.0].
AudioClip time_stretch(const AudioClip& clip, double rate);

// Pitch shift by time-stretching with rate 2^(-s/12) and resampling back,
// so duration is preserved exactly and frequencies scale by 2^(s/12).
// |semitones| <= 12.
AudioClip pitch_shift(const AudioClip& clip, double semitones);

AudioClip apply_deform(const AudioClip& clip, const DeformSpec& spec);

namespace detail {
// In-place iterative radix-2 FFT over 2^k points. inverse=true applies the
// conjugate transform and divides by n.
void fft_radix2(std::complex<double>* data, int n, bool inverse);

// Core polyphase kernel shared by resample() and pitch_shift(): produces
// out_len samples where output position n reads input position n / ratio.
Eigen::VectorXd resample_to_length(const Eigen::VectorXd& x, double ratio,
                                   Eigen::Index out_len);
}  // namespace detail

}  // namespace esc

#endif  // ESC_AUDIO_HPP
