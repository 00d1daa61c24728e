#ifndef ESC_TESTS_ORACLES_HPP
#define ESC_TESTS_ORACLES_HPP

// Independent reference implementations used as test oracles. Everything
// here is deliberately brute-force and kept apart from the library code it
// checks.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "esc/nn.hpp"

namespace oracle {

// O(N^2) discrete Fourier transform magnitudes for bins 0..N/2.
inline std::vector<double> dft_magnitude(const Eigen::VectorXd& x) {
  const auto n = static_cast<int>(x.size());
  std::vector<double> mags(static_cast<size_t>(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * k * i / n;
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    mags[static_cast<size_t>(k)] = std::abs(acc);
  }
  return mags;
}

// Frequency (Hz) of the strongest non-DC DFT bin.
inline double dominant_frequency(const Eigen::VectorXd& x, int sample_rate) {
  const auto mags = dft_magnitude(x);
  size_t best = 1;
  for (size_t k = 2; k < mags.size(); ++k)
    if (mags[k] > mags[best]) best = k;
  return static_cast<double>(best) * sample_rate / static_cast<double>(x.size());
}

// DFT bin width (Hz) for a clip of the given length.
inline double bin_hz(Eigen::Index n, int sample_rate) {
  return static_cast<double>(sample_rate) / static_cast<double>(n);
}

inline Eigen::VectorXd sine_wave(double freq, int sample_rate, double duration_s,
                                 double amplitude = 0.8) {
  const auto n = static_cast<Eigen::Index>(std::lround(sample_rate * duration_s));
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x[i] = amplitude *
           std::sin(2.0 * std::numbers::pi * freq * i / sample_rate);
  return x;
}

// Four-loop same-padded cross-correlation on a single (h*w) x cin map.
inline esc::nn::RowMat<double> conv2d_naive(const esc::nn::RowMat<double>& map,
                                            Eigen::Index h, Eigen::Index w,
                                            const esc::nn::RowMat<double>& kernel,
                                            Eigen::Index kh, Eigen::Index kw,
                                            Eigen::Index cin, Eigen::Index cout,
                                            const esc::nn::RowMat<double>& bias) {
  const Eigen::Index ph = (kh - 1) / 2;
  const Eigen::Index pw = (kw - 1) / 2;
  esc::nn::RowMat<double> out(h * w, cout);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      for (Eigen::Index co = 0; co < cout; ++co) {
        double acc = bias(0, co);
        for (Eigen::Index dy = 0; dy < kh; ++dy)
          for (Eigen::Index dx = 0; dx < kw; ++dx) {
            const Eigen::Index sy = y + dy - ph;
            const Eigen::Index sx = x + dx - pw;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            for (Eigen::Index ci = 0; ci < cin; ++ci)
              acc += map(sy * w + sx, ci) * kernel((dy * kw + dx) * cin + ci, co);
          }
        out(y * w + x, co) = acc;
      }
  return out;
}

// Direct evaluation of the width-9 regression delta with replicated edges.
inline Eigen::MatrixXd delta_naive(const Eigen::MatrixXd& seg) {
  const Eigen::Index rows = seg.rows(), cols = seg.cols();
  Eigen::MatrixXd out(rows, cols);
  const double denom = 2.0 * (1 + 4 + 9 + 16);
  for (Eigen::Index b = 0; b < rows; ++b)
    for (Eigen::Index t = 0; t < cols; ++t) {
      double acc = 0.0;
      for (int k = 1; k <= 4; ++k) {
        const Eigen::Index hi = std::min(cols - 1, t + k);
        const Eigen::Index lo = std::max<Eigen::Index>(0, t - k);
        acc += k * (seg(b, hi) - seg(b, lo));
      }
      out(b, t) = acc / denom;
    }
  return out;
}

// Tail mass P(X < lo) + P(X > 1 - lo) of Beta(a, a), integrated with the
// substitution x = t^(1/a) that removes the endpoint singularity:
//   int_0^c x^(a-1) (1-x)^(a-1) dx = (1/a) int_0^(c^a) (1 - t^(1/a))^(a-1) dt
inline double beta_symmetric_tail_mass(double a, double lo) {
  const auto transformed = [a](double upper, int steps) {
    double acc = 0.0;
    const double h = upper / steps;
    for (int i = 0; i < steps; ++i) {
      const double t = (i + 0.5) * h;
      acc += std::pow(1.0 - std::pow(t, 1.0 / a), a - 1.0) * h;
    }
    return acc / a;
  };
  const double tail = transformed(std::pow(lo, a), 200000);
  const double half = transformed(std::pow(0.5, a), 200000);
  return tail / half;  // by symmetry: tail mass below lo over mass below 0.5,
                       // and the two tails are equal
}

}  // namespace oracle

#endif  // ESC_TESTS_ORACLES_HPP
