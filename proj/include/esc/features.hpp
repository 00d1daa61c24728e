#ifndef ESC_FEATURES_HPP
#define ESC_FEATURES_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "esc/audio.hpp"
#include "esc/common.hpp"

namespace esc {

enum class BandType : uint8_t { LogMel = 0, LogGammatone = 1 };

// Log-scaled band spectrogram: rows are the 128 frequency bands, columns
// are time frames.
struct Spectrogram {
  Eigen::MatrixXd values;
  BandType band_type = BandType::LogMel;
  double frame_hop_s = 0.0;

  Eigen::Index bands() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

// Band-weighting matrix applied to STFT power, rows = bands, cols = FFT bins.
struct Filterbank {
  Eigen::MatrixXd weights;
  BandType kind = BandType::LogMel;
  double f_min = 0.0;
  double f_max = 0.0;
};

// One (128 bands x 128 frames x 2 channels) network input: a spectrogram
// segment and its temporal delta.
struct FeatureTensor {
  Eigen::MatrixXd channel0;  // log spectrogram segment
  Eigen::MatrixXd channel1;  // delta of channel0
  std::string clip_id;
  int segment_index = 0;
};

struct FeatureConfig {
  int n_fft = 1024;
  int hop = 512;
  int n_bands = 128;
  double silence_threshold_db = 60.0;
  int segment_frames = 128;
  double segment_overlap = 0.5;
};

// The sample rate every clip is brought to before feature extraction.
constexpr int kPipelineSampleRate = 44100;

// Frequency-scale conversions for the mel filterbank (HTK form).
double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Equivalent rectangular bandwidth at a given centre frequency, and the
// ERB-rate scale used to place gammatone centres.
double erb_bandwidth(double hz);
double hz_to_erb_rate(double hz);
double erb_rate_to_hz(double erbs);

// Hamming-windowed squared-magnitude STFT. Returns (n_fft/2 + 1) x frames
// with frames = floor((len - n_fft) / hop) + 1. Throws ClipTooShort for
// clips shorter than one window.
Eigen::MatrixXd stft_power(const AudioClip& clip, int n_fft = 1024, int hop = 512);

// Triangular mel filterbank, band centres uniform on the mel scale over
// [0, sr/2]. Any band too narrow to cover an FFT bin falls back to a unit
// weight at the bin nearest its centre so no band is ever empty.
Filterbank mel_filterbank(int n_bands, int sample_rate, int n_fft);

// Fourth-order gammatone magnitude responses sampled at FFT bin
// frequencies, centres uniform on the ERB-rate scale over [20, sr/2],
// each row peak-normalized to 1.
Filterbank gammatone_filterbank(int n_bands, int sample_rate, int n_fft);

// values = log10(weights * power + 1e-10)
Spectrogram apply_filterbank_log(const Eigen::MatrixXd& power, const Filterbank& fb,
                                 double frame_hop_s);

// Removes frames whose mean log energy sits more than threshold_db below
// the loudest frame. Keeps the single loudest frame if everything would go.
Spectrogram drop_silence(const Spectrogram& spec, double threshold_db);

// 50%-overlap segmentation into `length`-frame windows. Spectrograms
// shorter than one window are tiled up to `length` and yield one segment.
std::vector<Eigen::MatrixXd> segment(const Spectrogram& spec, int length = 128,
                                     double overlap = 0.5);

// Regression delta over a 9-frame window with replicated edges:
// d[t] = sum_{k=1..4} k * (x[t+k] - x[t-k]) / (2 * sum k^2)
Eigen::MatrixXd delta(const Eigen::MatrixXd& segment);

// Full extraction for one clip: STFT -> filterbank + log -> silence drop.
Spectrogram featurize_spectrogram(const AudioClip& clip, const Filterbank& fb,
                                  const FeatureConfig& cfg);

// Segmentation + per-segment delta, producing the network inputs.
std::vector<FeatureTensor> tensors_from_spectrogram(const Spectrogram& spec,
                                                    const std::string& clip_id,
                                                    const FeatureConfig& cfg);

// Convenience composition of the two stages, building the filterbank for
// the clip's sample rate.
std::vector<FeatureTensor> featurize(const AudioClip& clip, BandType kind,
                                     const FeatureConfig& cfg);

// ESCF feature file: magic "ESCF", version u16 = 1, u32 bands / frames /
// channels, float32 little-endian payload in band-major frame-middle
// channel-minor order, then a metadata trailer (band type, frame hop,
// clip id).
void write_escf(const std::string& path, const Spectrogram& spec,
                const std::string& clip_id);
struct EscfFile {
  Spectrogram spectrogram;
  std::string clip_id;
};
EscfFile read_escf(const std::string& path);

}  // namespace esc

#endif  // ESC_FEATURES_HPP
