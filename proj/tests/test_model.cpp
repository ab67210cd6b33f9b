#include "bmdal/bench.hpp"
#include "bmdal/model.hpp"
#include "bmdal/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace bmdal;

namespace {

Mat random_matrix(int r, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

ModelConfig tiny(std::vector<int> widths, Activation act, std::uint64_t seed) {
    ModelConfig c;
    c.widths = std::move(widths);
    c.activation = act;
    c.sigma_w = 0.9;
    c.sigma_b = 0.4;
    c.init_seed = seed;
    return c;
}

// Nonzero biases so every gradient path is exercised.
ModelParams perturbed(const ModelConfig& c, std::uint64_t seed) {
    ModelParams p = init_network(c);
    for (std::size_t l = 0; l < p.b.size(); ++l) p.b[l] = random_matrix(p.b[l].size(), 1, seed + l);
    return p;
}

double rmse(const Vec& a, const Vec& b) { return std::sqrt((a - b).squaredNorm() / a.size()); }

}  // namespace

TEST_CASE("init: zero biases, determinism, standard normal weights") {
    ModelConfig c = tiny({5, 100, 100, 1}, Activation::relu, 11);
    ModelParams p = init_network(c);
    for (const auto& b : p.b) CHECK(b.isZero(0.0));
    ModelParams q = init_network(c);
    for (std::size_t l = 0; l < p.W.size(); ++l) CHECK(p.W[l] == q.W[l]);

    const Mat& W = p.W[1];  // 10^4 draws
    const double mean = W.mean();
    const double var = (W.array() - mean).square().mean();
    CHECK(std::abs(mean) < 5.0 * 1.0 / 100.0);
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0) / 100.0);
}

TEST_CASE("init: invalid configuration") {
    ModelConfig c = tiny({3, 0, 1}, Activation::relu, 0);
    CHECK_THROWS_AS(init_network(c), ConfigError);
    c.widths = {3, 4, 2};
    CHECK_THROWS_AS(init_network(c), ConfigError);
}

TEST_CASE("forward: hand example and zero weights") {
    ModelConfig c = tiny({1, 1}, Activation::relu, 0);
    c.sigma_w = 1.0;
    ModelParams p = init_network(c);
    p.W[0](0, 0) = 3.0;
    Mat X(1, 1);
    X << 2.0;
    CHECK(forward(p, c, X).predictions[0] == doctest::Approx(6.0));

    ModelConfig c2 = tiny({4, 8, 8, 1}, Activation::silu, 3);
    ModelParams z = init_network(c2);
    for (auto& w : z.W) w.setZero();
    CHECK(forward(z, c2, random_matrix(6, 4, 1)).predictions.isZero(0.0));
    CHECK_THROWS_AS(forward(z, c2, random_matrix(6, 3, 1)), ConfigError);
}

TEST_CASE("forward: relu nets without biases are positively homogeneous") {
    // Scaling the input by a > 0 scales every pre-activation by a, so the
    // output scales by a (degree one, independent of depth).
    for (int seed = 0; seed < 5; ++seed) {
        ModelConfig c = tiny({3, 7, 7, 1}, Activation::relu, seed);
        ModelParams p = init_network(c);
        Mat X = random_matrix(5, 3, 100 + seed);
        Vec f1 = forward(p, c, X).predictions;
        Vec f2 = forward(p, c, 2.0 * X).predictions;
        CHECK((f2 - 2.0 * f1).norm() < 1e-12 * (1.0 + f1.norm()));
    }
}

TEST_CASE("train: zero learning rate leaves parameters unchanged") {
    ModelConfig c = tiny({3, 6, 1}, Activation::relu, 2);
    ModelParams p = init_network(c);
    TrainConfig tc;
    tc.epochs = 1;
    tc.initial_lr = 0.0;
    Mat X = random_matrix(20, 3, 5);
    Vec y = random_matrix(20, 1, 6);
    TrainedModel m = train(p, c, tc, X, y, X, y);
    for (std::size_t l = 0; l < p.W.size(); ++l) {
        CHECK((m.params.W[l] - p.W[l].cast<float>().cast<double>()).isZero(0.0));
        CHECK(m.params.b[l].isZero(0.0));
    }
    CHECK(m.train_history.size() == 1);
}

TEST_CASE("train: overfits a single point") {
    ModelConfig c = ModelConfig::standard(2, {16, 16}, Activation::relu, 4);
    TrainConfig tc = TrainConfig::defaults(Activation::relu);
    tc.epochs = 200;
    Mat X(1, 2);
    X << 0.3, -0.7;
    Vec y(1);
    y << 1.5;
    TrainedModel m = train(init_network(c), c, tc, X, y, X, y);
    CHECK(rmse(predict(m, X), y) < 1e-2);
}

TEST_CASE("train: learns friedman data and restores the best epoch") {
    Dataset d = synthetic_friedman(1280 + 1024, 0.3, 9);
    Mat Xtr = d.X.topRows(1280), Xva = d.X.bottomRows(1024);
    Vec ytr = d.y.head(1280), yva = d.y.tail(1024);
    ModelConfig c = ModelConfig::standard(10, {128, 128}, Activation::relu, 1);
    TrainConfig tc = TrainConfig::defaults(Activation::relu);
    tc.epochs = 64;
    TrainedModel m = train(init_network(c), c, tc, Xtr, ytr, Xva, yva);
    const double val = rmse(predict(m, Xva), yva);
    CHECK(val < 1.0);
    const auto it = std::min_element(m.train_history.begin(), m.train_history.end());
    CHECK(m.best_epoch == it - m.train_history.begin());
    CHECK(val == doctest::Approx(*it).epsilon(1e-6));
}

TEST_CASE("train: bit-reproducible and reports non-finite losses") {
    Dataset d = synthetic_friedman(300, 0.1, 2);
    ModelConfig c = ModelConfig::standard(10, {32}, Activation::silu, 8);
    TrainConfig tc = TrainConfig::defaults(Activation::silu);
    tc.epochs = 5;
    tc.minibatch_size = 64;  // 300 = 4 * 64 + 44, exercises the short batch
    tc.train_seed = 77;
    Mat X = d.X.topRows(200), Xv = d.X.bottomRows(100);
    Vec y = d.y.head(200), yv = d.y.tail(100);
    TrainedModel a = train(init_network(c), c, tc, X, y, Xv, yv);
    TrainedModel b = train(init_network(c), c, tc, X, y, Xv, yv);
    CHECK(a.train_history == b.train_history);
    for (std::size_t l = 0; l < a.params.W.size(); ++l) CHECK(a.params.W[l] == b.params.W[l]);

    Vec bad = y;
    bad[3] = std::nan("");
    try {
        train(init_network(c), c, tc, X, bad, Xv, yv);
        FAIL("expected a training error");
    } catch (const TrainingError& e) {
        CHECK(e.epoch == 0);
    }
}

TEST_CASE("last-layer features") {
    ModelConfig c = tiny({3, 5, 4, 1}, Activation::relu, 6);
    ModelParams p = perturbed(c, 40);
    Mat X = random_matrix(7, 3, 41);
    Mat F = extract_ll_features(p, c, X, Precision::f64);
    CHECK(F.cols() == 5);
    for (Eigen::Index i = 0; i < F.rows(); ++i) CHECK(F(i, 4) == doctest::Approx(c.sigma_b));

    // Gradient with respect to [W | b] of the last layer.
    Mat J = oracle::explicit_jacobian(p, c, X);
    CHECK((J.rightCols(5) - F).cwiseAbs().maxCoeff() < 1e-12);

    // Dead last hidden layer: all pre-activations negative.
    ModelParams dead = p;
    dead.W[1].setZero();
    dead.b[1].setConstant(-1.0);
    Mat Fd = extract_ll_features(dead, c, X, Precision::f64);
    CHECK(Fd.leftCols(4).isZero(0.0));
    CHECK((Fd.col(4).array() == c.sigma_b).all());
}

TEST_CASE("grad factors: structure and hand case") {
    ModelConfig c = tiny({2, 1}, Activation::relu, 1);
    ModelParams p = init_network(c);
    Mat X(2, 2);
    X << 1.0, 2.0, -3.0, 0.5;
    GradFactors g = extract_grad_factors(p, c, X, Precision::f64);
    REQUIRE(g.in.size() == 1);
    const double s = c.sigma_w / std::sqrt(2.0);
    CHECK(g.in[0](0, 0) == doctest::Approx(s * 1.0));
    CHECK(g.in[0](1, 1) == doctest::Approx(s * 0.5));
    CHECK(g.in[0](1, 2) == doctest::Approx(c.sigma_b));
    CHECK((g.out[0].array() == 1.0).all());

    ModelConfig c3 = tiny({3, 6, 5, 1}, Activation::relu, 2);
    GradFactors g3 = extract_grad_factors(init_network(c3), c3, random_matrix(9, 3, 3), Precision::f64);
    CHECK((g3.out.back().array() == 1.0).all());
    for (const auto& in : g3.in)
        for (Eigen::Index i = 0; i < in.rows(); ++i) CHECK(in.row(i).norm() > 0);
}

TEST_CASE("grad factors match finite differences") {
    for (Activation act : {Activation::relu, Activation::silu}) {
        ModelConfig c = tiny({4, 6, 5, 1}, act, 12);
        ModelParams p = perturbed(c, 13);
        Mat X = random_matrix(6, 4, 14);
        GradFactors g = extract_grad_factors(p, c, X, Precision::f64);
        Mat fd = oracle::finite_difference_jacobian(p, c, X, 1e-6);
        Mat rec(X.rows(), fd.cols());
        for (Eigen::Index n = 0; n < X.rows(); ++n) {
            Eigen::Index col = 0;
            for (std::size_t l = 0; l < g.in.size(); ++l) {
                const Eigen::Index din = g.in[l].cols() - 1, dout = g.out[l].cols();
                for (Eigen::Index i = 0; i < dout; ++i)
                    for (Eigen::Index k = 0; k < din; ++k) rec(n, col++) = g.out[l](n, i) * g.in[l](n, k);
                for (Eigen::Index i = 0; i < dout; ++i) rec(n, col++) = g.out[l](n, i) * g.in[l](n, din);
            }
        }
        const double err = (rec - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff();
        CHECK(err < 1e-5);
    }
}

TEST_CASE("single precision features stay close to double precision") {
    ModelConfig c = tiny({3, 8, 1}, Activation::silu, 5);
    ModelParams p = perturbed(c, 6);
    Mat X = random_matrix(10, 3, 7);
    Mat f32 = extract_ll_features(p, c, X, Precision::f32);
    Mat f64 = extract_ll_features(p, c, X, Precision::f64);
    CHECK((f32 - f64).cwiseAbs().maxCoeff() < 1e-5);
}
