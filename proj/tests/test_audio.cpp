#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "esc/audio.hpp"
#include "support/oracles.hpp"

using namespace esc;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

void push_u32(std::vector<unsigned char>& v, uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<unsigned char>(x >> (8 * i)));
}
void push_u16(std::vector<unsigned char>& v, uint16_t x) {
  v.push_back(static_cast<unsigned char>(x & 0xff));
  v.push_back(static_cast<unsigned char>(x >> 8));
}
void push_tag(std::vector<unsigned char>& v, const char* t) {
  v.insert(v.end(), t, t + 4);
}

// Hand-assembled WAV bytes so the parser is tested against raw layout.
std::vector<unsigned char> make_wav(uint16_t format, uint16_t channels,
                                    uint32_t rate, uint16_t bits,
                                    const std::vector<unsigned char>& data) {
  std::vector<unsigned char> v;
  push_tag(v, "RIFF");
  push_u32(v, 36 + static_cast<uint32_t>(data.size()));
  push_tag(v, "WAVE");
  push_tag(v, "fmt ");
  push_u32(v, 16);
  push_u16(v, format);
  push_u16(v, channels);
  push_u32(v, rate);
  push_u32(v, rate * channels * bits / 8);
  push_u16(v, static_cast<uint16_t>(channels * bits / 8));
  push_u16(v, bits);
  push_tag(v, "data");
  push_u32(v, static_cast<uint32_t>(data.size()));
  v.insert(v.end(), data.begin(), data.end());
  return v;
}

AudioClip sine_clip(double freq, int sr, double dur) {
  AudioClip c;
  c.samples = oracle::sine_wave(freq, sr, dur);
  c.sample_rate = sr;
  c.source_id = "sine";
  return c;
}

}  // namespace

TEST_CASE("load_wav scales PCM16 by 1/32768") {
  std::vector<unsigned char> data;
  for (int i = 0; i < 100; ++i) push_u16(data, 16384);
  const std::string path = temp_file("esc_pcm16.wav");
  write_bytes(path, make_wav(1, 1, 44100, 16, data));
  const AudioClip clip = load_wav(path);
  REQUIRE(clip.samples.size() == 100);
  CHECK(clip.sample_rate == 44100);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i)
    CHECK(clip.samples[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("load_wav downmixes stereo by averaging") {
  std::vector<unsigned char> data;
  const float left = 0.2f, right = 0.6f;
  for (int i = 0; i < 10; ++i) {
    uint32_t u;
    std::memcpy(&u, &left, 4);
    push_u32(data, u);
    std::memcpy(&u, &right, 4);
    push_u32(data, u);
  }
  const std::string path = temp_file("esc_stereo.wav");
  write_bytes(path, make_wav(3, 2, 44100, 32, data));
  const AudioClip clip = load_wav(path);
  REQUIRE(clip.samples.size() == 10);
  CHECK(clip.samples[0] == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("load_wav error paths") {
  const std::string path = temp_file("esc_bad.wav");

  SUBCASE("bad RIFF header") {
    write_bytes(path, {'N', 'O', 'P', 'E', 0, 0, 0, 0});
    CHECK_THROWS_AS(load_wav(path), MalformedWav);
  }
  SUBCASE("24-bit PCM is unsupported") {
    std::vector<unsigned char> data(6, 0);
    write_bytes(path, make_wav(1, 1, 44100, 24, data));
    CHECK_THROWS_AS(load_wav(path), UnsupportedEncoding);
  }
  SUBCASE("three channels are unsupported") {
    std::vector<unsigned char> data(6, 0);
    write_bytes(path, make_wav(1, 3, 44100, 16, data));
    CHECK_THROWS_AS(load_wav(path), UnsupportedEncoding);
  }
  SUBCASE("zero frames") {
    write_bytes(path, make_wav(1, 1, 44100, 16, {}));
    CHECK_THROWS_AS(load_wav(path), EmptyAudio);
  }
  SUBCASE("missing data chunk") {
    std::vector<unsigned char> v;
    push_tag(v, "RIFF");
    push_u32(v, 4);
    push_tag(v, "WAVE");
    write_bytes(path, v);
    CHECK_THROWS_AS(load_wav(path), MalformedWav);
  }
}

TEST_CASE("save_wav round trip within quantization") {
  AudioClip clip = sine_clip(440.0, 8000, 0.1);
  const std::string path = temp_file("esc_roundtrip.wav");
  save_wav(path, clip);
  const AudioClip back = load_wav(path);
  REQUIRE(back.samples.size() == clip.samples.size());
  CHECK((back.samples - clip.samples).cwiseAbs().maxCoeff() < 1.0 / 32000.0);
}

TEST_CASE("normalize peak-scales and is idempotent") {
  AudioClip clip;
  clip.sample_rate = 8000;

  SUBCASE("basic scaling") {
    clip.samples.resize(2);
    clip.samples << 0.1, -0.5;
    const AudioClip out = normalize(clip);
    CHECK(out.samples[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(out.samples[1] == -1.0);
  }
  SUBCASE("all-zero stays all-zero") {
    clip.samples = Eigen::VectorXd::Zero(3);
    const AudioClip out = normalize(clip);
    CHECK(out.samples.isZero(0.0));
  }
  SUBCASE("single sample") {
    clip.samples.resize(1);
    clip.samples << 0.25;
    CHECK(normalize(clip).samples[0] == 1.0);
  }
  SUBCASE("peak is exactly one and normalize is bitwise idempotent") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    clip.samples.resize(500);
    for (auto& s : clip.samples.reshaped()) s = u(rng);
    const AudioClip once = normalize(clip);
    CHECK(once.samples.cwiseAbs().maxCoeff() == 1.0);
    const AudioClip twice = normalize(once);
    CHECK(twice.samples == once.samples);
  }
}

TEST_CASE("resample length and identity") {
  AudioClip clip = sine_clip(440.0, 22050, 1.0);
  REQUIRE(clip.samples.size() == 22050);

  SUBCASE("doubling the rate doubles the length") {
    const AudioClip out = resample(clip, 44100);
    CHECK(out.samples.size() == 44100);
    CHECK(out.sample_rate == 44100);
  }
  SUBCASE("equal rates return bitwise-identical samples") {
    const AudioClip out = resample(clip, 22050);
    CHECK(out.samples == clip.samples);
  }
}

TEST_CASE("resample preserves a sine's dominant frequency") {
  const AudioClip clip = sine_clip(440.0, 48000, 0.25);
  const AudioClip out = resample(clip, 44100);
  const double got = oracle::dominant_frequency(out.samples, out.sample_rate);
  const double bin = oracle::bin_hz(out.samples.size(), out.sample_rate);
  CHECK(std::abs(got - 440.0) <= bin + 1e-9);
}

TEST_CASE("time_stretch duration contract") {
  const AudioClip clip = sine_clip(440.0, 8000, 1.0);

  SUBCASE("rate 1 keeps the duration") {
    const AudioClip out = time_stretch(clip, 1.0);
    CHECK(out.samples.size() == clip.samples.size());
  }
  SUBCASE("rate 2 halves a 4 s clip") {
    const AudioClip four = sine_clip(300.0, 8000, 4.0);
    const AudioClip out = time_stretch(four, 2.0);
    CHECK(std::abs(out.samples.size() - 16000) <= 512);
  }
  SUBCASE("duration * rate == input duration within one hop, random rates") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int i = 0; i < 5; ++i) {
      const double rate = u(rng);
      const AudioClip out = time_stretch(clip, rate);
      CHECK(std::abs(out.samples.size() * rate -
                     static_cast<double>(clip.samples.size())) <=
            512.0 * rate + 1.0);
    }
  }
  SUBCASE("rate outside [0.5, 2] is rejected") {
    CHECK_THROWS_AS(time_stretch(clip, 0.4), UsageError);
    CHECK_THROWS_AS(time_stretch(clip, 2.5), UsageError);
  }
}

TEST_CASE("time_stretch preserves pitch") {
  const AudioClip clip = sine_clip(440.0, 8000, 0.75);
  const AudioClip out = time_stretch(clip, 1.23);
  const double got = oracle::dominant_frequency(out.samples, 8000);
  const double bin = oracle::bin_hz(out.samples.size(), 8000);
  CHECK(std::abs(got - 440.0) <= bin + 1e-9);
}

TEST_CASE("pitch_shift moves the spectral peak and keeps the length") {
  const AudioClip clip = sine_clip(440.0, 8000, 0.75);

  SUBCASE("zero semitones is the identity") {
    const AudioClip out = pitch_shift(clip, 0.0);
    CHECK(out.samples == clip.samples);
  }
  SUBCASE("+12 semitones doubles the frequency") {
    const AudioClip out = pitch_shift(clip, 12.0);
    CHECK(out.samples.size() == clip.samples.size());
    const double got = oracle::dominant_frequency(out.samples, 8000);
    const double bin = oracle::bin_hz(out.samples.size(), 8000);
    CHECK(std::abs(got - 880.0) <= bin + 1e-9);
  }
  SUBCASE("-12 semitones halves the frequency") {
    const AudioClip out = pitch_shift(clip, -12.0);
    CHECK(out.samples.size() == clip.samples.size());
    const double got = oracle::dominant_frequency(out.samples, 8000);
    const double bin = oracle::bin_hz(out.samples.size(), 8000);
    CHECK(std::abs(got - 220.0) <= bin + 1e-9);
  }
  SUBCASE("more than an octave is rejected") {
    CHECK_THROWS_AS(pitch_shift(clip, 13.0), UsageError);
  }
}

TEST_CASE("deform tags and default augmentation set") {
  CHECK(DeformSpec{DeformKind::TimeStretch, 0.81}.tag() == "ts0.81");
  CHECK(DeformSpec{DeformKind::PitchShift, -2}.tag() == "ps-2");
  CHECK(DeformSpec{DeformKind::PitchShift, 1}.tag() == "ps+1");
  CHECK(DeformSpec::default_set().size() == 8);
}

TEST_CASE("fft_radix2 matches the naive DFT") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd x(256);
  for (auto& v : x.reshaped()) v = u(rng);
  std::vector<std::complex<double>> buf(256);
  for (int i = 0; i < 256; ++i) buf[i] = x[i];
  detail::fft_radix2(buf.data(), 256, false);
  const auto mags = oracle::dft_magnitude(x);
  for (int k = 0; k <= 128; ++k)
    CHECK(std::abs(buf[static_cast<size_t>(k)]) ==
          doctest::Approx(mags[static_cast<size_t>(k)]).epsilon(1e-9));
}
