#include <cmath>

#include "doctest.h"
#include "emde/error.hpp"
#include "emde/net.hpp"
#include "emde/random.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace emde;

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd random_target(Rng& rng, int n_sketches, int sketch_dim) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(n_sketches * sketch_dim);
  for (int k = 0; k < n_sketches; ++k)
    for (int r = 0; r < 3; ++r) t(k * sketch_dim + static_cast<Eigen::Index>(rng.below(sketch_dim))) += 1.0;
  return t;
}

TrainingSet toy_set(int n, std::uint64_t seed) {
  Rng rng(seed);
  TrainingSet s{Eigen::MatrixXd(6, n), Eigen::MatrixXd(8, n)};
  for (int c = 0; c < n; ++c) {
    s.inputs.col(c) = oracle::random_vector(rng, 6);
    s.targets.col(c) = random_target(rng, 2, 4);
  }
  return s;
}

}  // namespace

TEST_CASE("zero model predicts the uniform sketch") {
  const auto m = SketchModel::zeros({12, 5, 8}, 2);
  const auto r = forward_one(m, Eigen::VectorXd::Ones(12));
  CHECK(r.probs.rows() == 2);
  for (Eigen::Index i = 0; i < r.probs.size(); ++i) CHECK(r.probs.data()[i] == doctest::Approx(0.25));
}

TEST_CASE("softmax rows sum to one") {
  const auto m = oracle::random_model({10, 16, 16, 24}, 3, 4);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto r = forward_one(m, oracle::random_vector(rng, 10, -5, 5));
    for (int k = 0; k < 3; ++k) CHECK(r.probs.row(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("forward matches a loop oracle") {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto m = oracle::random_model({9, 7, 11, 12}, 3, 100 + t);
    const auto x = oracle::random_vector(rng, 9);
    const auto got = forward_one(m, x).logits;
    const auto want = oracle::forward_logits(m, to_std(x));
    for (Eigen::Index i = 0; i < got.size(); ++i) CHECK(std::abs(got(i) - want[i]) <= 1e-10);
    const auto p = oracle::softmax_rows(want, 3);
    const auto probs = forward_one(m, x).probs;
    for (Eigen::Index i = 0; i < probs.size(); ++i) CHECK(std::abs(probs.data()[i] - p[i]) <= 1e-12);
  }
}

TEST_CASE("forward rejects a wrong input length") {
  const auto m = SketchModel::zeros({4, 2}, 1);
  CHECK_THROWS_AS(forward_one(m, Eigen::VectorXd::Zero(5)), ContractError);
}

TEST_CASE("backward of a zero output gradient is zero") {
  const auto m = oracle::random_model({5, 6, 4}, 2, 3);
  const auto tr = forward(m, Eigen::VectorXd::Ones(5));
  const auto g = backward(m, tr, Eigen::MatrixXd::Zero(4, 1));
  CHECK(g.input.isZero());
  for (const auto& w : g.weights) CHECK(w.isZero());
}

TEST_CASE("backward of a single layer is W transpose g") {
  const auto m = oracle::random_model({5, 6}, 2, 3);
  Rng rng(3);
  const auto tr = forward(m, oracle::random_vector(rng, 5));
  const Eigen::MatrixXd g = oracle::random_vector(rng, 6);
  CHECK(backward(m, tr, g).input.isApprox(m.weights[0].transpose() * g, 1e-14));
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(5);
  for (int draw = 0; draw < 10; ++draw) {
    auto m = oracle::random_model({6, 8, 8, 12}, 3, 50 + draw);
    const auto x = oracle::random_vector(rng, 6);
    const auto t = random_target(rng, 3, 4);
    const auto r = loss_and_grad(m, x, t);
    CHECK(r.loss == doctest::Approx(oracle::loss(m, to_std(x), to_std(t))).epsilon(1e-12));

    for (Eigen::Index i = 0; i < 6; ++i) {
      const auto fd = oracle::central_difference(
          [&](double v) {
            auto xp = to_std(x);
            xp[static_cast<std::size_t>(i)] = v;
            return oracle::loss(m, xp, to_std(t));
          },
          x(i));
      CHECK(oracle::rel_err(r.grads.input(i), fd, 1e-4) <= 1e-4);
    }
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
      for (int s = 0; s < 5; ++s) {
        const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.weights[l].rows())));
        const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.weights[l].cols())));
        const double w0 = m.weights[l](i, j);
        const auto fd = oracle::central_difference(
            [&](double v) {
              m.weights[l](i, j) = v;
              const double f = oracle::loss(m, to_std(x), to_std(t));
              m.weights[l](i, j) = w0;
              return f;
            },
            w0);
        CHECK(oracle::rel_err(r.grads.weights[l](i, j), fd, 1e-4) <= 1e-4);
        const double b0 = m.biases[l](i);
        const auto fdb = oracle::central_difference(
            [&](double v) {
              m.biases[l](i) = v;
              const double f = oracle::loss(m, to_std(x), to_std(t));
              m.biases[l](i) = b0;
              return f;
            },
            b0);
        CHECK(oracle::rel_err(r.grads.biases[l](i), fdb, 1e-4) <= 1e-4);
      }
    }
  }
}

TEST_CASE("loss at a matching target is its entropy with zero gradient") {
  // A zero model predicts uniform rows; a uniform target matches it.
  const auto m = SketchModel::zeros({3, 5, 8}, 2);
  const Eigen::VectorXd t = Eigen::VectorXd::Ones(8);
  const auto r = loss_and_grad(m, Eigen::VectorXd::Ones(3), t);
  CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(r.grads.weights.back().norm() <= 1e-14);
  CHECK(r.grads.biases.back().norm() <= 1e-14);
}

TEST_CASE("one-hot target on a uniform model costs ln(sketch_dim)") {
  const auto m = SketchModel::zeros({3, 4, 2 * 128}, 2);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(256);
  t(5) = 1;
  t(128 + 77) = 1;
  CHECK(loss_and_grad(m, Eigen::VectorXd::Ones(3), t).loss == doctest::Approx(std::log(128.0)).epsilon(1e-12));
}

TEST_CASE("all-zero target rows are skipped") {
  const auto m = SketchModel::zeros({3, 8}, 2);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(8);
  t(1) = 2;
  const auto r = loss_and_grad(m, Eigen::VectorXd::Ones(3), t);
  CHECK(r.skipped_rows == 1);
  CHECK(r.loss == doctest::Approx(std::log(4.0) / 2));
  CHECK(r.grads.biases[0].segment(4, 4).isZero());
}

TEST_CASE("zero learning rate leaves the loss flat") {
  const auto set = toy_set(32, 1);
  const auto m = oracle::random_model({6, 10, 8}, 2, 9);
  const auto r = train(m, set, TrainConfig{3, 8, 0.0, 1, Precision::float64});
  REQUIRE(r.loss_curve.size() == 4);
  for (double l : r.loss_curve) CHECK(l == r.loss_curve[0]);
}

TEST_CASE("fitting one example drives the loss down") {
  const auto set = toy_set(1, 2);
  const auto m = oracle::random_model({6, 16, 8}, 2, 10);
  const auto r = train(m, set, TrainConfig{30, 1, 1e-2, 3, Precision::float64});
  for (std::size_t e = 4; e < r.loss_curve.size(); ++e) CHECK(r.loss_curve[e] < r.loss_curve[e - 1]);
  CHECK(r.loss_curve.back() < 0.5 * r.loss_curve.front());
}

TEST_CASE("training is bit-identical for a fixed seed") {
  const auto set = toy_set(50, 3);
  const auto m = SketchModel::initialize({6, 12, 12, 8}, 2, 77);
  const TrainConfig cfg{4, 7, 1e-3, 42, Precision::float64};
  const auto a = train(m, set, cfg);
  const auto b = train(m, set, cfg);
  CHECK(a.loss_curve == b.loss_curve);
  for (std::size_t l = 0; l < a.model.n_layers(); ++l) CHECK(a.model.weights[l] == b.model.weights[l]);
  auto other = cfg;
  other.seed = 43;
  CHECK(train(m, set, other).model.weights[0] != a.model.weights[0]);
}

TEST_CASE("float32 training tracks float64") {
  const auto set = toy_set(40, 4);
  const auto m = SketchModel::initialize({6, 12, 8}, 2, 78);
  const auto d = train(m, set, TrainConfig{5, 8, 1e-2, 5, Precision::float64});
  const auto f = train(m, set, TrainConfig{5, 8, 1e-2, 5, Precision::float32});
  CHECK(f.loss_curve.back() < f.loss_curve.front());
  CHECK(f.loss_curve.back() == doctest::Approx(d.loss_curve.back()).epsilon(1e-3));
}

TEST_CASE("epoch callback sees every epoch") {
  const auto set = toy_set(10, 5);
  std::vector<int> seen;
  train(SketchModel::initialize({6, 4, 8}, 2, 1), set, TrainConfig{3, 4, 1e-3, 1, Precision::float64},
        [&](int e, double, const SketchModel&) { seen.push_back(e); });
  CHECK(seen == std::vector<int>{1, 2, 3});
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  testing::TempDir dir("net");
  auto m = oracle::random_model({7, 5, 5, 12}, 3, 11);
  m.leaky_slope = 0.02;
  save_model(dir / "m.bin", m);
  const auto back = load_model(dir / "m.bin");
  CHECK(back.widths == m.widths);
  CHECK(back.n_sketches == 3);
  CHECK(back.leaky_slope == 0.02);
  CHECK(back.seed == 11);
  for (std::size_t l = 0; l < m.n_layers(); ++l) {
    CHECK(back.weights[l] == m.weights[l]);
    CHECK(back.biases[l] == m.biases[l]);
  }
  testing::write_file(dir / "junk.bin", "EMDENET1");
  CHECK_THROWS_AS(load_model(dir / "junk.bin"), DataError);
}

TEST_CASE("non-finite weights raise NumericError") {
  auto m = SketchModel::zeros({3, 4}, 1);
  m.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward_one(m, Eigen::VectorXd::Ones(3)), NumericError);
}

TEST_CASE("diverging training raises NumericError") {
  const auto set = toy_set(8, 6);
  auto m = SketchModel::initialize({6, 4, 8}, 2, 1);
  m.weights[0](0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train(m, set, TrainConfig{1, 4, 1e-3, 1, Precision::float64}), NumericError);
}
