#include "esc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <vector>

namespace esc {

namespace {

constexpr double kPi = std::numbers::pi;

struct ByteReader {
  const std::vector<unsigned char>& buf;
  size_t pos = 0;

  bool has(size_t n) const { return pos + n <= buf.size(); }
  uint32_t u32() {
    if (!has(4)) throw MalformedWav("truncated WAV file");
    uint32_t v = buf[pos] | buf[pos + 1] << 8 | buf[pos + 2] << 16 |
                 uint32_t(buf[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  uint16_t u16() {
    if (!has(2)) throw MalformedWav("truncated WAV file");
    uint16_t v = static_cast<uint16_t>(buf[pos] | buf[pos + 1] << 8);
    pos += 2;
    return v;
  }
  bool tag(const char* t) {
    if (!has(4)) return false;
    bool ok = std::equal(t, t + 4, buf.begin() + pos);
    pos += 4;
    return ok;
  }
};

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

double princarg(double phase) {
  return phase - 2.0 * kPi * std::round(phase / (2.0 * kPi));
}

}  // namespace

std::string DeformSpec::tag() const {
  char buf[32];
  if (kind == DeformKind::TimeStretch)
    std::snprintf(buf, sizeof buf, "ts%.2f", amount);
  else
    std::snprintf(buf, sizeof buf, "ps%+g", amount);
  return buf;
}

const std::vector<DeformSpec>& DeformSpec::default_set() {
  static const std::vector<DeformSpec> set = {
      {DeformKind::TimeStretch, 0.81}, {DeformKind::TimeStretch, 0.93},
      {DeformKind::TimeStretch, 1.07}, {DeformKind::TimeStretch, 1.23},
      {DeformKind::PitchShift, -2},    {DeformKind::PitchShift, -1},
      {DeformKind::PitchShift, 1},     {DeformKind::PitchShift, 2},
  };
  return set;
}

AudioClip load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  ByteReader r{bytes};

  if (!r.tag("RIFF")) throw MalformedWav(path + ": missing RIFF header");
  r.u32();  // declared size, not trusted
  if (!r.tag("WAVE")) throw MalformedWav(path + ": not a WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  size_t data_size = 0;

  while (r.has(8)) {
    char id[4];
    std::copy_n(bytes.begin() + r.pos, 4, id);
    r.pos += 4;
    uint32_t size = r.u32();
    if (!r.has(size)) throw MalformedWav(path + ": truncated chunk");
    if (std::equal(id, id + 4, "fmt ")) {
      if (size < 16) throw MalformedWav(path + ": fmt chunk too small");
      ByteReader fr{bytes};
      fr.pos = r.pos;
      format = fr.u16();
      channels = fr.u16();
      rate = fr.u32();
      fr.u32();  // byte rate
      fr.u16();  // block align
      bits = fr.u16();
      if (format == 0xfffe) {
        // WAVE_FORMAT_EXTENSIBLE: actual format is the GUID's first word.
        if (size < 40) throw MalformedWav(path + ": bad extensible fmt chunk");
        fr.pos = r.pos + 24;
        format = fr.u16();
      }
      have_fmt = true;
    } else if (std::equal(id, id + 4, "data")) {
      data = bytes.data() + r.pos;
      data_size = size;
    }
    r.pos += size + (size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw MalformedWav(path + ": missing fmt chunk");
  if (!data) throw MalformedWav(path + ": missing data chunk");
  if (channels < 1 || channels > 2)
    throw UnsupportedEncoding(path + ": only mono/stereo supported");
  if (rate == 0) throw MalformedWav(path + ": zero sample rate");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw UnsupportedEncoding(path + ": only PCM16 and float32 supported");

  const size_t bytes_per_sample = pcm16 ? 2 : 4;
  const size_t frames = data_size / (bytes_per_sample * channels);
  if (frames == 0) throw EmptyAudio(path + ": no audio frames");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = path;
  clip.samples.resize(static_cast<Eigen::Index>(frames));
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + (i * channels + ch) * bytes_per_sample;
      if (pcm16) {
        int16_t s = static_cast<int16_t>(p[0] | p[1] << 8);
        acc += s / 32768.0;
      } else {
        uint32_t u = p[0] | p[1] << 8 | p[2] << 16 | uint32_t(p[3]) << 24;
        float v;
        std::memcpy(&v, &u, 4);
        acc += v;
      }
    }
    clip.samples[static_cast<Eigen::Index>(i)] = acc / channels;
  }
  return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
  if (clip.samples.size() == 0) throw EmptyAudio("refusing to write empty clip");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file: " + path);
  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_size = n * 2;
  f.write("RIFF", 4);
  io::write_u32(f, 36 + data_size);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  io::write_u32(f, 16);
  io::write_u16(f, 1);  // PCM
  io::write_u16(f, 1);  // mono
  io::write_u32(f, static_cast<uint32_t>(clip.sample_rate));
  io::write_u32(f, static_cast<uint32_t>(clip.sample_rate) * 2);
  io::write_u16(f, 2);
  io::write_u16(f, 16);
  f.write("data", 4);
  io::write_u32(f, data_size);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i) {
    double v = std::clamp(clip.samples[i], -1.0, 1.0);
    auto s = static_cast<int16_t>(std::lrint(v * 32767.0));
    io::write_u16(f, static_cast<uint16_t>(s));
  }
  if (!f) throw DataError("short write: " + path);
}

AudioClip normalize(const AudioClip& clip) {
  AudioClip out = clip;
  const double peak = clip.samples.size() ? clip.samples.cwiseAbs().maxCoeff() : 0.0;
  if (peak > 0.0) out.samples /= peak;
  return out;
}

namespace detail {

void fft_radix2(std::complex<double>* a, int n, bool inverse) {
  if (n <= 0 || (n & (n - 1)) != 0)
    throw UsageError("fft_radix2 requires a power-of-two size");
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / len * (inverse ? 1.0 : -1.0);
    const std::complex<double> step(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= step;
      }
    }
  }
  if (inverse)
    for (int i = 0; i < n; ++i) a[i] /= n;
}

Eigen::VectorXd resample_to_length(const Eigen::VectorXd& x, double ratio,
                                   Eigen::Index out_len) {
  constexpr int kHalf = 16;  // 32 taps total
  const double cutoff = std::min(1.0, ratio);
  const Eigen::Index n = x.size();
  Eigen::VectorXd y(out_len);
  for (Eigen::Index m = 0; m < out_len; ++m) {
    const double t = m / ratio;
    const auto k0 = static_cast<Eigen::Index>(std::floor(t)) - kHalf + 1;
    double acc = 0.0, wsum = 0.0;
    for (Eigen::Index k = k0; k < k0 + 2 * kHalf; ++k) {
      const double d = t - static_cast<double>(k);
      const double taper = 0.5 + 0.5 * std::cos(kPi * d / kHalf);
      const double w = cutoff * sinc(cutoff * d) * taper;
      wsum += w;
      if (k >= 0 && k < n) acc += w * x[k];
    }
    y[m] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return y;
}

}  // namespace detail

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw UsageError("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const auto out_len =
      static_cast<Eigen::Index>(std::llround(clip.samples.size() * ratio));
  AudioClip out;
  out.samples = detail::resample_to_length(clip.samples, ratio, out_len);
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  return out;
}

AudioClip time_stretch(const AudioClip& clip, double rate) {
  if (rate < 0.5 || rate > 2.0)
    throw UsageError("time_stretch: rate must lie in [0.5, 2.0]");
  if (clip.samples.size() == 0) throw EmptyAudio("time_stretch: empty clip");

  constexpr int kWin = 2048;
  constexpr int kHop = 512;
  constexpr int kBins = kWin / 2 + 1;
  const Eigen::Index n = clip.samples.size();
  const auto out_len = static_cast<Eigen::Index>(std::llround(n / rate));
  const Eigen::Index frames =
      out_len <= kWin ? 1 : (out_len - kWin + kHop - 1) / kHop + 1;

  Eigen::VectorXd padded = Eigen::VectorXd::Zero(n + 2 * kWin);
  padded.head(n) = clip.samples;

  Eigen::VectorXd window(kWin);
  for (int i = 0; i < kWin; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kWin);

  Eigen::VectorXd out = Eigen::VectorXd::Zero((frames - 1) * kHop + kWin);
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(out.size());

  std::vector<std::complex<double>> spec(kWin);
  Eigen::VectorXd mag(kBins), phase(kBins);
  Eigen::VectorXd prev_phase(kBins), synth_phase(kBins), next_phase(kBins);
  std::vector<int> peaks;
  peaks.reserve(kBins);
  Eigen::Index prev_pos = 0;

  for (Eigen::Index m = 0; m < frames; ++m) {
    const auto pos = static_cast<Eigen::Index>(std::llround(m * kHop * rate));
    for (int i = 0; i < kWin; ++i)
      spec[i] = padded[pos + i] * window[i];
    detail::fft_radix2(spec.data(), kWin, false);
    for (int k = 0; k < kBins; ++k) {
      mag[k] = std::abs(spec[k]);
      phase[k] = std::arg(spec[k]);
    }

    if (m == 0) {
      synth_phase = phase;
    } else {
      const double dpos = static_cast<double>(pos - prev_pos);
      peaks.clear();
      for (int k = 2; k < kBins - 2; ++k) {
        if (mag[k] > mag[k - 1] && mag[k] > mag[k - 2] && mag[k] >= mag[k + 1] &&
            mag[k] >= mag[k + 2])
          peaks.push_back(k);
      }
      next_phase = synth_phase;
      if (peaks.empty()) {
        for (int k = 0; k < kBins; ++k) {
          const double omega = 2.0 * kPi * k / kWin;
          const double dev = princarg(phase[k] - prev_phase[k] - omega * dpos);
          next_phase[k] = synth_phase[k] + (omega + dev / dpos) * kHop;
        }
      } else {
        for (int p : peaks) {
          const double omega = 2.0 * kPi * p / kWin;
          const double dev = princarg(phase[p] - prev_phase[p] - omega * dpos);
          next_phase[p] = synth_phase[p] + (omega + dev / dpos) * kHop;
        }
        // Identity phase locking: bins follow the nearest peak, regions
        // split at midpoints between adjacent peaks.
        for (size_t pi = 0; pi < peaks.size(); ++pi) {
          const int p = peaks[pi];
          const int lo = pi == 0 ? 0 : (peaks[pi - 1] + p) / 2 + 1;
          const int hi = pi + 1 == peaks.size() ? kBins - 1
                                                : (p + peaks[pi + 1]) / 2;
          for (int k = lo; k <= hi; ++k)
            if (k != p) next_phase[k] = next_phase[p] + (phase[k] - phase[p]);
        }
      }
      synth_phase = next_phase;
    }
    prev_phase = phase;
    prev_pos = pos;

    spec[0] = std::complex<double>(mag[0] * std::cos(synth_phase[0]), 0.0);
    spec[kWin / 2] =
        std::complex<double>(mag[kWin / 2] * std::cos(synth_phase[kWin / 2]), 0.0);
    for (int k = 1; k < kWin / 2; ++k) {
      spec[k] = std::polar(mag[k], synth_phase[k]);
      spec[kWin - k] = std::conj(spec[k]);
    }
    detail::fft_radix2(spec.data(), kWin, true);

    const Eigen::Index o = m * kHop;
    for (int i = 0; i < kWin; ++i) {
      out[o + i] += spec[i].real() * window[i];
      wsum[o + i] += window[i] * window[i];
    }
  }

  AudioClip result;
  result.sample_rate = clip.sample_rate;
  result.source_id = clip.source_id;
  result.samples.resize(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i)
    result.samples[i] = wsum[i] > 1e-9 ? out[i] / wsum[i] : 0.0;
  return result;
}

AudioClip pitch_shift(const AudioClip& clip, double semitones) {
  if (std::abs(semitones) > 12.0)
    throw UsageError("pitch_shift: |semitones| must be <= 12");
  if (semitones == 0.0) return clip;
  const double factor = std::exp2(semitones / 12.0);
  AudioClip stretched = time_stretch(clip, 1.0 / factor);
  AudioClip out;
  out.samples = detail::resample_to_length(stretched.samples, 1.0 / factor,
                                           clip.samples.size());
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  return out;
}

AudioClip apply_deform(const AudioClip& clip, const DeformSpec& spec) {
  return spec.kind == DeformKind::TimeStretch ? time_stretch(clip, spec.amount)
                                              : pitch_shift(clip, spec.amount);
}

}  // namespace esc
