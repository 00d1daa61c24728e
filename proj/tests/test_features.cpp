#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "esc/features.hpp"
#include "support/oracles.hpp"

using namespace esc;

namespace {

AudioClip clip_of(Eigen::VectorXd samples, int sr) {
  AudioClip c;
  c.samples = std::move(samples);
  c.sample_rate = sr;
  c.source_id = "test";
  return c;
}

Spectrogram spec_of(Eigen::MatrixXd values) {
  Spectrogram s;
  s.values = std::move(values);
  s.band_type = BandType::LogMel;
  s.frame_hop_s = 512.0 / 44100.0;
  return s;
}

}  // namespace

TEST_CASE("stft_power frame arithmetic") {
  SUBCASE("a 5 s 44.1 kHz clip gives 429 frames") {
    const auto clip = clip_of(Eigen::VectorXd::Zero(220500), 44100);
    const Eigen::MatrixXd p = stft_power(clip);
    CHECK(p.rows() == 513);
    CHECK(p.cols() == 429);
    CHECK(p.maxCoeff() == 0.0);
  }
  SUBCASE("clips shorter than a window are rejected") {
    const auto clip = clip_of(Eigen::VectorXd::Zero(1023), 44100);
    CHECK_THROWS_AS(stft_power(clip), ClipTooShort);
  }
}

TEST_CASE("stft_power puts a bin-centred sine in that bin") {
  const double f = 43.0 * 44100.0 / 1024.0;
  const auto clip = clip_of(oracle::sine_wave(f, 44100, 0.2), 44100);
  const Eigen::MatrixXd p = stft_power(clip);
  for (Eigen::Index t = 0; t < p.cols(); ++t) {
    Eigen::Index argmax = 0;
    p.col(t).maxCoeff(&argmax);
    CHECK(argmax == 43);
  }
}

TEST_CASE("stft_power matches a brute-force DFT on random frames") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd x(1024);
  for (auto& v : x.reshaped()) v = u(rng);
  const Eigen::MatrixXd p = stft_power(clip_of(x, 44100));
  REQUIRE(p.cols() == 1);

  Eigen::VectorXd windowed(1024);
  for (int i = 0; i < 1024; ++i)
    windowed[i] =
        x[i] * (0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / 1023.0));
  const auto mags = oracle::dft_magnitude(windowed);
  for (int k = 0; k <= 512; ++k) {
    const double expect = mags[static_cast<size_t>(k)] * mags[static_cast<size_t>(k)];
    CHECK(p(k, 0) == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("mel scale conversions") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  for (const double f : {100.0, 1000.0, 10000.0})
    CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-9));
}

TEST_CASE("mel filterbank structure") {
  const Filterbank fb = mel_filterbank(128, 44100, 1024);
  REQUIRE(fb.weights.rows() == 128);
  REQUIRE(fb.weights.cols() == 513);
  CHECK(fb.weights.minCoeff() >= 0.0);

  SUBCASE("every band has support") {
    for (int b = 0; b < 128; ++b) CHECK(fb.weights.row(b).maxCoeff() > 0.0);
  }
  SUBCASE("no spectral holes between the first and last band centre") {
    // centres of band 0 and band 127 in Hz
    const double mel_max = hz_to_mel(22050.0);
    const double first = mel_to_hz(mel_max * 1.0 / 129.0);
    const double last = mel_to_hz(mel_max * 128.0 / 129.0);
    const double bin_hz = 44100.0 / 1024.0;
    const Eigen::VectorXd colsum = fb.weights.colwise().sum();
    for (int k = 0; k < 513; ++k) {
      const double f = k * bin_hz;
      if (f > first && f < last) CHECK(colsum[k] > 0.0);
    }
  }
}

TEST_CASE("gammatone filterbank structure") {
  CHECK(erb_bandwidth(1000.0) == doctest::Approx(132.639).epsilon(1e-9));

  const Filterbank fb = gammatone_filterbank(128, 44100, 1024);
  REQUIRE(fb.weights.rows() == 128);
  REQUIRE(fb.weights.cols() == 513);
  const double e_lo = hz_to_erb_rate(20.0);
  const double e_hi = hz_to_erb_rate(22050.0);
  const double bin_hz = 44100.0 / 1024.0;
  for (int b = 0; b < 128; ++b) {
    CHECK(fb.weights.row(b).maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::Index argmax = 0;
    fb.weights.row(b).maxCoeff(&argmax);
    const double fc = erb_rate_to_hz(e_lo + (e_hi - e_lo) * b / 127.0);
    CHECK(std::abs(argmax * bin_hz - fc) <= bin_hz / 2.0 + 1e-9);
  }
}

TEST_CASE("apply_filterbank_log") {
  const Filterbank fb = mel_filterbank(128, 44100, 1024);

  SUBCASE("zero power hits the log floor") {
    const Spectrogram s = apply_filterbank_log(Eigen::MatrixXd::Zero(513, 4), fb,
                                               512.0 / 44100.0);
    CHECK(s.values.rows() == 128);
    CHECK(s.values.cols() == 4);
    CHECK(s.values.minCoeff() == doctest::Approx(-10.0).epsilon(1e-12));
    CHECK(s.values.maxCoeff() == doctest::Approx(-10.0).epsilon(1e-12));
  }
  SUBCASE("a unit single-bin filter row gives ~0") {
    Filterbank unit;
    unit.kind = BandType::LogMel;
    unit.weights = Eigen::MatrixXd::Zero(1, 513);
    unit.weights(0, 10) = 1.0;
    Eigen::MatrixXd power = Eigen::MatrixXd::Zero(513, 1);
    power(10, 0) = 1.0;
    const Spectrogram s = apply_filterbank_log(power, unit, 0.01);
    CHECK(std::abs(s.values(0, 0)) < 1e-9);
  }
  SUBCASE("doubling the power adds log10(2)") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(1.0, 2.0);  // far above the floor
    Eigen::MatrixXd power(513, 3);
    for (auto& v : power.reshaped()) v = u(rng);
    const Spectrogram a = apply_filterbank_log(power, fb, 0.01);
    const Spectrogram b = apply_filterbank_log(2.0 * power, fb, 0.01);
    const Eigen::MatrixXd diff = b.values - a.values;
    CHECK(diff.minCoeff() == doctest::Approx(std::log10(2.0)).epsilon(1e-6));
    CHECK(diff.maxCoeff() == doctest::Approx(std::log10(2.0)).epsilon(1e-6));
  }
  SUBCASE("wrong bin count is rejected") {
    CHECK_THROWS_AS(apply_filterbank_log(Eigen::MatrixXd::Zero(100, 4), fb, 0.01),
                    ShapeMismatch);
  }
}

TEST_CASE("drop_silence") {
  SUBCASE("uniform energy is unchanged") {
    const Spectrogram s = spec_of(Eigen::MatrixXd::Constant(128, 50, -2.0));
    CHECK(drop_silence(s, 60.0).frames() == 50);
  }
  SUBCASE("frames 80 dB down are dropped at a 60 dB threshold") {
    Eigen::MatrixXd v(128, 150);
    v.leftCols(100).setZero();            // loud: log10 power 0
    v.rightCols(50).setConstant(-8.0);    // -80 dB relative
    const Spectrogram out = drop_silence(spec_of(v), 60.0);
    CHECK(out.frames() == 100);
    CHECK(out.values.maxCoeff() == 0.0);
    CHECK(out.values.minCoeff() == 0.0);
  }
  SUBCASE("an all-silent clip keeps a single frame") {
    const Spectrogram s = spec_of(Eigen::MatrixXd::Constant(128, 40, -10.0));
    CHECK(drop_silence(s, 60.0).frames() == 1);
  }
  SUBCASE("never increases the frame count, never returns zero frames") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-12.0, 0.0);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::MatrixXd v(16, 30);
      for (auto& x : v.reshaped()) x = u(rng);
      const Spectrogram out = drop_silence(spec_of(v), 30.0);
      CHECK(out.frames() >= 1);
      CHECK(out.frames() <= 30);
    }
  }
}

TEST_CASE("segment counts and boundaries") {
  SUBCASE("431 frames give 5 segments") {
    const auto segs = segment(spec_of(Eigen::MatrixXd::Random(128, 431)));
    CHECK(segs.size() == 5);
  }
  SUBCASE("exactly 128 frames give one segment") {
    const auto segs = segment(spec_of(Eigen::MatrixXd::Random(128, 128)));
    CHECK(segs.size() == 1);
  }
  SUBCASE("short spectrograms are tiled") {
    Eigen::MatrixXd v(4, 100);
    for (Eigen::Index t = 0; t < 100; ++t) v.col(t).setConstant(double(t));
    const auto segs = segment(spec_of(v), 128, 0.5);
    REQUIRE(segs.size() == 1);
    REQUIRE(segs[0].cols() == 128);
    for (Eigen::Index t = 0; t < 128; ++t)
      CHECK(segs[0](0, t) == double(t % 100));
  }
  SUBCASE("segment i starts at frame 64*i and neighbours share 64 frames") {
    const Spectrogram s = spec_of(Eigen::MatrixXd::Random(8, 300));
    const auto segs = segment(s);
    REQUIRE(segs.size() == 3);
    for (size_t i = 0; i < segs.size(); ++i)
      CHECK(segs[i] == s.values.middleCols(64 * static_cast<Eigen::Index>(i), 128));
    CHECK(segs[0].rightCols(64) == segs[1].leftCols(64));
  }
}

TEST_CASE("delta") {
  SUBCASE("constant input gives exactly zero") {
    const Eigen::MatrixXd d = delta(Eigen::MatrixXd::Constant(128, 128, 3.7));
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("a unit ramp gives slope one in the interior") {
    Eigen::MatrixXd x(4, 64);
    for (Eigen::Index t = 0; t < 64; ++t) x.col(t).setConstant(double(t));
    const Eigen::MatrixXd d = delta(x);
    for (Eigen::Index t = 4; t < 60; ++t)
      CHECK(d(0, t) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("matches the direct regression formula on random input") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    Eigen::MatrixXd x(128, 128);
    for (auto& v : x.reshaped()) v = u(rng);
    const Eigen::MatrixXd got = delta(x);
    const Eigen::MatrixXd want = oracle::delta_naive(x);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("fewer than 9 frames is rejected") {
    CHECK_THROWS_AS(delta(Eigen::MatrixXd::Zero(4, 8)), TooFewFrames);
  }
}

TEST_CASE("featurize composition") {
  // tone + noise floor so no frame is silence-dropped
  std::mt19937_64 rng(51);
  std::normal_distribution<double> g(0.0, 0.02);
  Eigen::VectorXd x = oracle::sine_wave(800.0, 44100, 5.0, 0.7);
  for (auto& v : x.reshaped()) v += g(rng);
  const AudioClip clip = clip_of(x, 44100);
  FeatureConfig cfg;

  const auto tensors = featurize(clip, BandType::LogMel, cfg);
  CHECK(tensors.size() == 5);  // 429 frames -> floor((429-128)/64)+1
  for (const auto& t : tensors) {
    CHECK(t.channel0.rows() == 128);
    CHECK(t.channel0.cols() == 128);
    CHECK(t.channel1.rows() == 128);
    CHECK(t.channel1.cols() == 128);
    CHECK((t.channel1 - delta(t.channel0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.clip_id == "test");
  }

  SUBCASE("deterministic: identical input, bitwise-identical output") {
    const auto again = featurize(clip, BandType::LogMel, cfg);
    REQUIRE(again.size() == tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
      CHECK(tensors[i].channel0 == again[i].channel0);
      CHECK(tensors[i].channel1 == again[i].channel1);
    }
  }
}

TEST_CASE("ESCF round trip") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-10.0, 2.0);
  Spectrogram spec;
  spec.band_type = BandType::LogGammatone;
  spec.frame_hop_s = 512.0 / 44100.0;
  spec.values.resize(128, 200);
  // quantize to float up front so the round trip is bitwise
  for (auto& v : spec.values.reshaped()) v = static_cast<float>(u(rng));

  const std::string path =
      (std::filesystem::temp_directory_path() / "esc_roundtrip.escf").string();
  write_escf(path, spec, "clip-42");
  const EscfFile back = read_escf(path);

  CHECK(back.clip_id == "clip-42");
  CHECK(back.spectrogram.band_type == BandType::LogGammatone);
  CHECK(back.spectrogram.frame_hop_s == spec.frame_hop_s);
  REQUIRE(back.spectrogram.values.rows() == 128);
  REQUIRE(back.spectrogram.values.cols() == 200);
  CHECK(back.spectrogram.values == spec.values);

  SUBCASE("re-writing produces identical bytes") {
    const std::string path2 =
        (std::filesystem::temp_directory_path() / "esc_roundtrip2.escf").string();
    write_escf(path2, back.spectrogram, back.clip_id);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
  }

  SUBCASE("missing file raises MissingFeatures with the path") {
    CHECK_THROWS_AS(read_escf("/nonexistent/zzz.escf"), MissingFeatures);
  }
}
