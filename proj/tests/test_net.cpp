#include "drcpd/net.hpp"
#include "drcpd/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace drcpd;

namespace {

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

// Mean squared output: loss = (1/n) sum f_i^2, grad_i = 2 f_i / n.
OutputLoss quadratic_loss() {
    return [](const Eigen::VectorXd& f) {
        const double n = static_cast<double>(f.size());
        return std::make_pair(f.squaredNorm() / n, Eigen::VectorXd(2.0 * f / n));
    };
}

} // namespace

TEST_SUITE("net") {

TEST_CASE("init respects layer shapes, fan-in bounds, and bias convention") {
    const MlpModel m = mlp_init({3, 16, 16, 1}, 7, 0.0, 1.0);
    REQUIRE(m.num_layers() == 3);
    CHECK(m.weights[0].rows() == 3);
    CHECK(m.weights[0].cols() == 16);
    CHECK(m.weights[2].cols() == 1);

    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(m.layer_sizes[l]));
        CHECK(m.weights[l].cwiseAbs().maxCoeff() <= bound);
    }
    CHECK(m.biases[0].isConstant(0.01));
    CHECK(m.biases[1].isConstant(0.01));
    CHECK(m.biases[2].isConstant(1.0));

    const MlpModel again = mlp_init({3, 16, 16, 1}, 7, 0.0, 1.0);
    CHECK(m.weights[1] == again.weights[1]);

    CHECK_THROWS(mlp_init({3, 16, 2}, 7, 0.0, 1.0));  // output width must be 1
    CHECK_THROWS(mlp_init({3, 0, 1}, 7, 0.0, 1.0));   // degenerate hidden layer
    CHECK_THROWS(mlp_init({3, 4, 1}, 7, -0.1, 1.0));  // negative decay
    CHECK_THROWS(mlp_init({3, 4, 1}, 7, 0.0, 0.0));   // keep_prob outside (0,1]
}

TEST_CASE("forward pass is a rectifier chain") {
    MlpModel m = mlp_init({1, 1}, 0, 0.0, 1.0);
    m.weights[0](0, 0) = 2.0;
    m.biases[0](0) = 1.0;
    Eigen::MatrixXd x(2, 1);
    x << 3.0, -4.0;
    const Eigen::VectorXd out = mlp_forward(m, x, false).first;
    CHECK(out(0) == 7.0);  // 2*3 + 1
    CHECK(out(1) == 0.0);  // 2*(-4) + 1 clipped at zero

    const MlpModel big = mlp_init({5, 32, 1}, 3, 0.0, 1.0);
    const Eigen::VectorXd f = mlp_forward(big, random_batch(40, 5, 9), false).first;
    CHECK(f.minCoeff() >= 0.0);
}

TEST_CASE("backward matches central differences, with and without weight decay") {
    for (double l2 : {0.0, 0.05}) {
        const MlpModel m = mlp_init({2, 6, 6, 1}, 11, l2, 1.0);
        const Eigen::MatrixXd batch = random_batch(10, 2, 12);
        CHECK(gradient_check(m, quadratic_loss(), batch, 1e-6) < 1e-6);
    }
}

TEST_CASE("rectifier subgradient at zero is zero") {
    MlpModel m = mlp_init({1, 1}, 0, 0.0, 1.0);
    m.weights[0](0, 0) = 1.0;
    m.biases[0](0) = 0.0;
    Eigen::MatrixXd x(1, 1);
    x << 0.0; // pre-activation exactly 0
    auto [out, trace] = mlp_forward(m, x, false);
    CHECK(out(0) == 0.0);
    const ParamGrads g = mlp_backward(m, trace, Eigen::VectorXd::Ones(1));
    CHECK(g.weights[0](0, 0) == 0.0);
    CHECK(g.biases[0](0) == 0.0);
}

TEST_CASE("adam moves every parameter by lr under a unit gradient") {
    MlpModel m = mlp_init({2, 3, 1}, 5, 0.0, 1.0);
    const MlpModel before = m;
    AdamState st = adam_init(m, 1e-3);

    ParamGrads g;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Ones(m.weights[l].rows(), m.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Ones(m.biases[l].size()));
    }
    REQUIRE(adam_step(m, st, g));

    // Bias-corrected moments are exactly 1 after one step, so the update is
    // lr / (1 + epsilon).
    const double expected = 1e-3 / (1.0 + 1e-8);
    const double delta = before.weights[0](0, 0) - m.weights[0](0, 0);
    CHECK(delta == doctest::Approx(expected).epsilon(1e-12));
    CHECK(st.step == 1);
}

TEST_CASE("adam refuses non-finite gradients and leaves parameters intact") {
    MlpModel m = mlp_init({2, 3, 1}, 5, 0.0, 1.0);
    const MlpModel before = m;
    AdamState st = adam_init(m, 1e-3);

    ParamGrads g;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    }
    g.weights[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(adam_step(m, st, g));
    CHECK(m.weights[1] == before.weights[1]);
    CHECK(st.step == 0);
}

TEST_CASE("inverted dropout scales survivors and vanishes at inference") {
    const MlpModel m = mlp_init({4, 64, 1}, 21, 0.0, 0.5);
    const Eigen::MatrixXd batch = random_batch(6, 4, 22);

    auto [out_train, trace] = mlp_forward(m, batch, true, 99);
    REQUIRE(trace.masks.size() == 1);
    const Eigen::MatrixXd& mask = trace.masks[0];
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
            CHECK((mask(i, j) == 0.0 || mask(i, j) == 2.0));

    // Same seed reproduces the masks; inference ignores them entirely.
    const Eigen::VectorXd out_again = mlp_forward(m, batch, true, 99).first;
    CHECK(out_train == out_again);
    const Eigen::VectorXd eval1 = mlp_forward(m, batch, false, 1).first;
    const Eigen::VectorXd eval2 = mlp_forward(m, batch, false, 2).first;
    CHECK(eval1 == eval2);
}

TEST_CASE("checkpoints round trip bitwise") {
    const MlpModel m = mlp_init({3, 8, 8, 1}, 31, 0.01, 0.5);
    const auto path =
        (std::filesystem::temp_directory_path() / "drcpd_net_ckpt.txt").string();
    save_mlp(m, path);
    const MlpModel loaded = load_mlp(path);

    REQUIRE(loaded.layer_sizes == m.layer_sizes);
    CHECK(loaded.l2 == m.l2);
    CHECK(loaded.keep_prob == m.keep_prob);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        CHECK(loaded.weights[l] == m.weights[l]);
        CHECK(loaded.biases[l] == m.biases[l]);
    }
    const Eigen::MatrixXd batch = random_batch(5, 3, 33);
    CHECK(mlp_forward(m, batch, false).first == mlp_forward(loaded, batch, false).first);
}

} // TEST_SUITE
