#include <doctest.h>

#include "esc/mixup.hpp"
#include "support/oracles.hpp"

using namespace esc;

namespace {

// tiny dataset: distinct constant vectors per element
std::pair<std::vector<Eigen::VectorXf>, std::vector<int>> toy_dataset(int n,
                                                                      int dim) {
  std::vector<Eigen::VectorXf> xs;
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) {
    xs.push_back(Eigen::VectorXf::Constant(dim, static_cast<float>(i + 1)));
    ys.push_back(i % 3);
  }
  return {xs, ys};
}

}  // namespace

TEST_CASE("sample_lambda draws lie in [0,1] with the Beta(a,a) profile") {
  Rng rng(123);
  const int n = 10000;
  double sum = 0.0;
  int tails = 0;
  for (int i = 0; i < n; ++i) {
    const double l = sample_lambda(0.2, rng);
    REQUIRE(l >= 0.0);
    REQUIRE(l <= 1.0);
    sum += l;
    if (l < 0.1 || l > 0.9) ++tails;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.04));  // mean 0.5 +/- 0.02

  // numerically integrated Beta(0.2, 0.2) tail mass as the oracle
  const double expected = oracle::beta_symmetric_tail_mass(0.2, 0.1);
  CHECK(expected > 0.55);
  CHECK(static_cast<double>(tails) / n == doctest::Approx(expected).epsilon(0.05));
  CHECK(static_cast<double>(tails) / n > 0.55);
}

TEST_CASE("sample_lambda rejects non-positive alpha") {
  Rng rng(1);
  CHECK_THROWS_AS(sample_lambda(0.0, rng), UsageError);
}

TEST_CASE("mix_pair implements the convex combination") {
  Eigen::VectorXf xi = Eigen::VectorXf::Constant(4, 1.0f);
  Eigen::VectorXf xj = Eigen::VectorXf::Constant(4, 3.0f);
  Eigen::RowVectorXf out_x(4), out_y(3);
  mix_pair(xi, 0, xj, 2, 0.7, out_x, out_y);
  for (int i = 0; i < 4; ++i)
    CHECK(out_x[i] == doctest::Approx(0.7 * 1.0 + 0.3 * 3.0).epsilon(1e-6));
  CHECK(out_y[0] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(out_y[1] == 0.0f);
  CHECK(out_y[2] == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("mix_batch with mixup disabled is plain sampling") {
  auto [xs, ys] = toy_dataset(6, 5);
  MixupConfig cfg{0.2, false};
  Rng rng(7);
  const MixupBatch batch = mix_batch(xs, ys, 10, 3, cfg, rng);
  REQUIRE(batch.inputs.rows() == 10);
  REQUIRE(batch.labels.cols() == 3);
  for (Eigen::Index b = 0; b < 10; ++b) {
    CHECK(batch.lambdas[static_cast<size_t>(b)] == 1.0);
    // exact one-hot labels
    int ones = 0, zeros = 0;
    for (int c = 0; c < 3; ++c) {
      if (batch.labels(b, c) == 1.0f) ++ones;
      if (batch.labels(b, c) == 0.0f) ++zeros;
    }
    CHECK(ones == 1);
    CHECK(zeros == 2);
    // the input equals some dataset element exactly
    const float v = batch.inputs(b, 0);
    const int idx = static_cast<int>(v) - 1;
    REQUIRE(idx >= 0);
    REQUIRE(idx < 6);
    CHECK(batch.inputs.row(b) == xs[static_cast<size_t>(idx)].transpose());
    CHECK(batch.labels(b, ys[static_cast<size_t>(idx)]) == 1.0f);
  }
}

TEST_CASE("a self-pair yields the original sample for any lambda") {
  auto [xs, ys] = toy_dataset(1, 4);  // single element forces i == j
  MixupConfig cfg{0.2, true};
  Rng rng(9);
  const MixupBatch batch = mix_batch(xs, ys, 8, 3, cfg, rng);
  for (Eigen::Index b = 0; b < 8; ++b) {
    for (int d = 0; d < 4; ++d)
      CHECK(batch.inputs(b, d) == doctest::Approx(1.0f).epsilon(1e-5));
    CHECK(batch.labels(b, 0) == doctest::Approx(1.0f).epsilon(1e-5));
    CHECK(batch.labels(b, 1) == 0.0f);
  }
}

TEST_CASE("mixup batch invariants") {
  auto [xs, ys] = toy_dataset(12, 6);
  MixupConfig cfg{0.2, true};
  Rng rng(21);
  const MixupBatch batch = mix_batch(xs, ys, 64, 3, cfg, rng);

  float lo = xs.front()[0], hi = xs.front()[0];
  for (const auto& x : xs) {
    lo = std::min(lo, x.minCoeff());
    hi = std::max(hi, x.maxCoeff());
  }
  for (Eigen::Index b = 0; b < batch.inputs.rows(); ++b) {
    // labels on the probability simplex with at most two nonzero entries
    float sum = 0.0f;
    int nonzero = 0;
    for (Eigen::Index c = 0; c < batch.labels.cols(); ++c) {
      const float v = batch.labels(b, c);
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      sum += v;
      if (v != 0.0f) ++nonzero;
    }
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-6));
    CHECK(nonzero <= 2);
    // inputs bounded by the dataset envelope
    CHECK(batch.inputs.row(b).minCoeff() >= lo - 1e-6f);
    CHECK(batch.inputs.row(b).maxCoeff() <= hi + 1e-6f);
    CHECK(batch.lambdas[static_cast<size_t>(b)] >= 0.0);
    CHECK(batch.lambdas[static_cast<size_t>(b)] <= 1.0);
  }
}

TEST_CASE("mix_pair keeps the pairwise envelope") {
  Rng rng(33);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXf xi(8), xj(8);
    for (int d = 0; d < 8; ++d) {
      xi[d] = u(rng);
      xj[d] = u(rng);
    }
    const double l = sample_lambda(0.3, rng);
    Eigen::RowVectorXf out_x(8), out_y(4);
    mix_pair(xi, 1, xj, 2, l, out_x, out_y);
    for (int d = 0; d < 8; ++d) {
      CHECK(out_x[d] >= std::min(xi[d], xj[d]) - 1e-6f);
      CHECK(out_x[d] <= std::max(xi[d], xj[d]) + 1e-6f);
    }
  }
}

TEST_CASE("mix_batch is deterministic under a fixed seed") {
  auto [xs, ys] = toy_dataset(10, 4);
  MixupConfig cfg{0.2, true};
  Rng rng_a(1234), rng_b(1234);
  const MixupBatch a = mix_batch(xs, ys, 32, 3, cfg, rng_a);
  const MixupBatch b = mix_batch(xs, ys, 32, 3, cfg, rng_b);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  CHECK(a.lambdas == b.lambdas);
}

TEST_CASE("mix_batch rejects an empty dataset") {
  std::vector<Eigen::VectorXf> xs;
  std::vector<int> ys;
  MixupConfig cfg;
  Rng rng(2);
  CHECK_THROWS_AS(mix_batch(xs, ys, 4, 3, cfg, rng), EmptyDataset);
}

TEST_CASE("mix_with_primaries follows the given pass order when disabled") {
  auto [xs, ys] = toy_dataset(5, 3);
  MixupConfig cfg{0.2, false};
  Rng rng(3);
  const std::vector<int> primaries = {4, 2, 0};
  const MixupBatch batch = mix_with_primaries(xs, ys, primaries, 3, cfg, rng);
  REQUIRE(batch.inputs.rows() == 3);
  CHECK(batch.inputs(0, 0) == 5.0f);
  CHECK(batch.inputs(1, 0) == 3.0f);
  CHECK(batch.inputs(2, 0) == 1.0f);
}
