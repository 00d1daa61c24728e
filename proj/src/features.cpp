#include "esc/features.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

namespace esc {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kLogEps = 1e-10;
}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double erb_bandwidth(double hz) { return 24.7 * (4.37 * hz / 1000.0 + 1.0); }

double hz_to_erb_rate(double hz) {
  return 21.4 * std::log10(4.37 * hz / 1000.0 + 1.0);
}

double erb_rate_to_hz(double erbs) {
  return (std::pow(10.0, erbs / 21.4) - 1.0) * 1000.0 / 4.37;
}

Eigen::MatrixXd stft_power(const AudioClip& clip, int n_fft, int hop) {
  const Eigen::Index n = clip.samples.size();
  if (n < n_fft)
    throw ClipTooShort("stft_power: clip shorter than one analysis window");
  const Eigen::Index frames = (n - n_fft) / hop + 1;
  const int bins = n_fft / 2 + 1;

  Eigen::VectorXd window(n_fft);
  for (int i = 0; i < n_fft; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n_fft - 1));

  Eigen::MatrixXd power(bins, frames);
  std::vector<std::complex<double>> buf(n_fft);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index off = t * hop;
    for (int i = 0; i < n_fft; ++i)
      buf[i] = clip.samples[off + i] * window[i];
    detail::fft_radix2(buf.data(), n_fft, false);
    for (int k = 0; k < bins; ++k) power(k, t) = std::norm(buf[k]);
  }
  return power;
}

Filterbank mel_filterbank(int n_bands, int sample_rate, int n_fft) {
  const int bins = n_fft / 2 + 1;
  const double f_max = sample_rate / 2.0;
  const double mel_max = hz_to_mel(f_max);

  // n_bands + 2 edge points uniform in mel; band b spans edges b-1..b+1.
  Eigen::VectorXd edges(n_bands + 2);
  for (int i = 0; i < n_bands + 2; ++i)
    edges[i] = mel_to_hz(mel_max * i / (n_bands + 1));

  Filterbank fb;
  fb.kind = BandType::LogMel;
  fb.f_min = 0.0;
  fb.f_max = f_max;
  fb.weights = Eigen::MatrixXd::Zero(n_bands, bins);
  const double bin_hz = static_cast<double>(sample_rate) / n_fft;
  for (int b = 0; b < n_bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f < hi)
        w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb.weights(b, k) = std::max(0.0, w);
    }
    // At 128 bands the lowest triangles are narrower than one FFT bin and
    // would otherwise be empty; give those a unit tap at the nearest bin.
    if (fb.weights.row(b).maxCoeff() <= 0.0) {
      const auto k = static_cast<int>(std::min<double>(
          bins - 1, std::max(0.0, std::round(mid / bin_hz))));
      fb.weights(b, k) = 1.0;
    }
  }
  return fb;
}

Filterbank gammatone_filterbank(int n_bands, int sample_rate, int n_fft) {
  const int bins = n_fft / 2 + 1;
  const double f_min = 20.0;
  const double f_max = sample_rate / 2.0;
  const double e_lo = hz_to_erb_rate(f_min);
  const double e_hi = hz_to_erb_rate(f_max);

  Filterbank fb;
  fb.kind = BandType::LogGammatone;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.weights = Eigen::MatrixXd::Zero(n_bands, bins);
  const double bin_hz = static_cast<double>(sample_rate) / n_fft;
  for (int b = 0; b < n_bands; ++b) {
    const double fc = erb_rate_to_hz(e_lo + (e_hi - e_lo) * b / (n_bands - 1));
    const double bw = 1.019 * erb_bandwidth(fc);
    for (int k = 0; k < bins; ++k) {
      const double r = (k * bin_hz - fc) / bw;
      // |1 + j r|^-4 magnitude response of a 4th-order gammatone
      fb.weights(b, k) = std::pow(1.0 + r * r, -2.0);
    }
    fb.weights.row(b) /= fb.weights.row(b).maxCoeff();
  }
  return fb;
}

Spectrogram apply_filterbank_log(const Eigen::MatrixXd& power, const Filterbank& fb,
                                 double frame_hop_s) {
  if (power.rows() != fb.weights.cols())
    throw ShapeMismatch("apply_filterbank_log: power bins do not match filterbank");
  Spectrogram spec;
  spec.band_type = fb.kind;
  spec.frame_hop_s = frame_hop_s;
  spec.values = ((fb.weights * power).array() + kLogEps).log10();
  return spec;
}

Spectrogram drop_silence(const Spectrogram& spec, double threshold_db) {
  // Frame score is the mean log10 power over bands; threshold_db is
  // expressed in dB, i.e. 10 * log10 units. Frames at the numeric log
  // floor hold zero power and count as silence even when every frame is
  // at the floor, in which case the single loudest frame survives.
  const Eigen::VectorXd score = spec.values.colwise().mean();
  const double floor_cut = std::log10(kLogEps) + 1e-9;
  const double cutoff = std::max(score.maxCoeff() - threshold_db / 10.0, floor_cut);

  std::vector<Eigen::Index> keep;
  keep.reserve(spec.frames());
  for (Eigen::Index t = 0; t < spec.frames(); ++t)
    if (score[t] >= cutoff) keep.push_back(t);
  if (keep.empty()) {
    Eigen::Index loudest = 0;
    score.maxCoeff(&loudest);
    keep.push_back(loudest);
  }

  Spectrogram out;
  out.band_type = spec.band_type;
  out.frame_hop_s = spec.frame_hop_s;
  out.values.resize(spec.bands(), static_cast<Eigen::Index>(keep.size()));
  for (size_t i = 0; i < keep.size(); ++i)
    out.values.col(static_cast<Eigen::Index>(i)) = spec.values.col(keep[i]);
  return out;
}

std::vector<Eigen::MatrixXd> segment(const Spectrogram& spec, int length,
                                     double overlap) {
  const auto hop = static_cast<Eigen::Index>(std::lround(length * (1.0 - overlap)));
  const Eigen::Index frames = spec.frames();
  std::vector<Eigen::MatrixXd> out;

  if (frames < length) {
    // Tile short clips rather than zero-padding them.
    Eigen::MatrixXd seg(spec.bands(), length);
    for (Eigen::Index t = 0; t < length; ++t)
      seg.col(t) = spec.values.col(t % frames);
    out.push_back(std::move(seg));
    return out;
  }

  const Eigen::Index count = (frames - length) / hop + 1;
  out.reserve(static_cast<size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    out.push_back(spec.values.middleCols(i * hop, length));
  return out;
}

Eigen::MatrixXd delta(const Eigen::MatrixXd& seg) {
  constexpr int kReach = 4;  // 9-frame regression window
  const Eigen::Index frames = seg.cols();
  if (frames < 2 * kReach + 1)
    throw TooFewFrames("delta: segment needs at least 9 frames");

  double denom = 0.0;
  for (int k = 1; k <= kReach; ++k) denom += 2.0 * k * k;

  Eigen::MatrixXd out(seg.rows(), frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(seg.rows());
    for (int k = 1; k <= kReach; ++k) {
      const Eigen::Index ahead = std::min(frames - 1, t + k);
      const Eigen::Index behind = std::max<Eigen::Index>(0, t - k);
      acc += k * (seg.col(ahead) - seg.col(behind));
    }
    out.col(t) = acc / denom;
  }
  return out;
}

Spectrogram featurize_spectrogram(const AudioClip& clip, const Filterbank& fb,
                                  const FeatureConfig& cfg) {
  const Eigen::MatrixXd power = stft_power(clip, cfg.n_fft, cfg.hop);
  const double hop_s = static_cast<double>(cfg.hop) / clip.sample_rate;
  Spectrogram spec = apply_filterbank_log(power, fb, hop_s);
  return drop_silence(spec, cfg.silence_threshold_db);
}

std::vector<FeatureTensor> tensors_from_spectrogram(const Spectrogram& spec,
                                                    const std::string& clip_id,
                                                    const FeatureConfig& cfg) {
  std::vector<FeatureTensor> out;
  auto segments = segment(spec, cfg.segment_frames, cfg.segment_overlap);
  out.reserve(segments.size());
  for (size_t i = 0; i < segments.size(); ++i) {
    FeatureTensor ft;
    ft.channel0 = std::move(segments[i]);
    ft.channel1 = delta(ft.channel0);
    ft.clip_id = clip_id;
    ft.segment_index = static_cast<int>(i);
    out.push_back(std::move(ft));
  }
  return out;
}

std::vector<FeatureTensor> featurize(const AudioClip& clip, BandType kind,
                                     const FeatureConfig& cfg) {
  const Filterbank fb = kind == BandType::LogMel
                            ? mel_filterbank(cfg.n_bands, clip.sample_rate, cfg.n_fft)
                            : gammatone_filterbank(cfg.n_bands, clip.sample_rate,
                                                   cfg.n_fft);
  return tensors_from_spectrogram(featurize_spectrogram(clip, fb, cfg),
                                  clip.source_id, cfg);
}

void write_escf(const std::string& path, const Spectrogram& spec,
                const std::string& clip_id) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write feature file: " + path);
  f.write("ESCF", 4);
  io::write_u16(f, 1);
  io::write_u32(f, static_cast<uint32_t>(spec.bands()));
  io::write_u32(f, static_cast<uint32_t>(spec.frames()));
  io::write_u32(f, 1);  // channels: pre-segmentation spectrogram
  for (Eigen::Index b = 0; b < spec.bands(); ++b)
    for (Eigen::Index t = 0; t < spec.frames(); ++t)
      io::write_f32(f, static_cast<float>(spec.values(b, t)));
  // metadata trailer
  f.put(static_cast<char>(spec.band_type));
  io::write_f64(f, spec.frame_hop_s);
  io::write_u32(f, static_cast<uint32_t>(clip_id.size()));
  f.write(clip_id.data(), static_cast<std::streamsize>(clip_id.size()));
  if (!f) throw DataError("short write: " + path);
}

EscfFile read_escf(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingFeatures("cannot open feature file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "ESCF")
    throw DataError(path + ": not an ESCF file");
  const uint16_t version = io::read_u16(f);
  if (version != 1) throw DataError(path + ": unsupported ESCF version");
  const uint32_t bands = io::read_u32(f);
  const uint32_t frames = io::read_u32(f);
  const uint32_t channels = io::read_u32(f);
  if (channels != 1) throw DataError(path + ": unexpected channel count");
  if (bands == 0 || frames == 0) throw DataError(path + ": empty spectrogram");

  EscfFile out;
  out.spectrogram.values.resize(bands, frames);
  for (uint32_t b = 0; b < bands; ++b)
    for (uint32_t t = 0; t < frames; ++t)
      out.spectrogram.values(b, t) = io::read_f32(f);
  int tag = f.get();
  if (tag == std::char_traits<char>::eof())
    throw DataError(path + ": missing metadata trailer");
  out.spectrogram.band_type = static_cast<BandType>(tag);
  out.spectrogram.frame_hop_s = io::read_f64(f);
  const uint32_t id_len = io::read_u32(f);
  out.clip_id.resize(id_len);
  f.read(out.clip_id.data(), id_len);
  if (!f) throw DataError(path + ": truncated metadata");
  return out;
}

}  // namespace esc
