#include "drcpd/simulate.hpp"

#include "testutil.hpp"

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <string>

using namespace drcpd;

TEST_SUITE("simulate") {

TEST_CASE("random covariances are symmetric positive definite") {
    for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
        const Eigen::MatrixXd sigma = random_spd(5, seed);
        CHECK(sigma == sigma.transpose());
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
        // A'A is positive semidefinite, so the ridge floors the spectrum.
        CHECK(eig.eigenvalues().minCoeff() >= 0.5 - 1e-12);
    }
    const Eigen::MatrixXd one = random_spd(1, 3);
    CHECK(one(0, 0) > 0.0);
    CHECK_THROWS(random_spd(0, 1));
}

TEST_CASE("spec validation catches shape and definiteness problems") {
    GaussianSpec spec;
    spec.mu = Eigen::VectorXd::Zero(3);
    spec.sigma = random_spd(3, 5);
    CHECK_NOTHROW(validate_gaussian_spec(spec));

    GaussianSpec bad_shape = spec;
    bad_shape.sigma = random_spd(2, 5);
    CHECK_THROWS(validate_gaussian_spec(bad_shape));

    GaussianSpec asym = spec;
    asym.sigma(0, 1) += 1e-6;
    CHECK_THROWS(validate_gaussian_spec(asym));

    GaussianSpec indefinite = spec;
    indefinite.sigma = -Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS(validate_gaussian_spec(indefinite));
}

TEST_CASE("the affine map reproduces the mean and covariance exactly") {
    GaussianSpec spec;
    spec.mu = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
    spec.sigma = random_spd(4, 9);

    const Eigen::MatrixXd at_zero = mvn_transform(spec, Eigen::MatrixXd::Zero(1, 4));
    CHECK(at_zero.row(0).transpose() == spec.mu);

    // L e_i recovers the i-th Cholesky column, so L L' rebuilds sigma.
    const Eigen::MatrixXd images =
        mvn_transform(spec, Eigen::MatrixXd::Identity(4, 4));
    Eigen::MatrixXd l(4, 4);
    for (int i = 0; i < 4; ++i)
        l.col(i) = images.row(i).transpose() - spec.mu;
    CHECK((l * l.transpose() - spec.sigma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample moments converge to the spec") {
    GaussianSpec spec;
    spec.mu = Eigen::VectorXd::LinSpaced(5, -2.0, 2.0);
    spec.sigma = random_spd(5, 21);

    const Eigen::Index n = 50000;
    const Eigen::MatrixXd x = sample_mvn(spec, n, 77);
    REQUIRE(x.rows() == n);
    REQUIRE(x.cols() == 5);

    const Eigen::RowVectorXd mean = x.colwise().mean();
    const double scale = std::sqrt(spec.sigma.diagonal().maxCoeff());
    for (int d = 0; d < 5; ++d)
        CHECK(std::abs(mean(d) - spec.mu(d)) <
              4.0 * scale / std::sqrt(static_cast<double>(n)));

    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    CHECK((cov - spec.sigma).norm() < 0.1 * spec.sigma.norm());
}

TEST_CASE("sampling is seed deterministic") {
    GaussianSpec spec;
    spec.mu = Eigen::VectorXd::Zero(3);
    spec.sigma = random_spd(3, 2);
    CHECK(sample_mvn(spec, 20, 5) == sample_mvn(spec, 20, 5));
    CHECK(sample_mvn(spec, 20, 5) != sample_mvn(spec, 20, 6));
}

TEST_CASE("perturbation scales with the magnitude and keeps validity") {
    GaussianSpec spec;
    spec.mu = Eigen::VectorXd::Zero(20);
    spec.sigma = random_spd(20, 4);

    SUBCASE("vanishing magnitude moves nothing") {
        const GaussianSpec tiny = perturb_params(spec, 1e-12, 8);
        CHECK((tiny.mu - spec.mu).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((tiny.sigma - spec.sigma).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("the post-change spec stays well formed across seeds") {
        for (std::uint64_t seed = 0; seed < 100; ++seed)
            CHECK_NOTHROW(perturb_params(spec, 1.0, seed));
    }
    SUBCASE("the mean shift is bounded by the magnitude per coordinate") {
        const GaussianSpec moved = perturb_params(spec, 0.5, 8);
        CHECK((moved.mu - spec.mu).cwiseAbs().maxCoeff() <= 0.5);
        CHECK((moved.mu - spec.mu).cwiseAbs().maxCoeff() > 0.0);
    }
    SUBCASE("the perturbed pair is statistically distinguishable") {
        GaussianSpec base;
        base.mu = Eigen::VectorXd::Zero(10);
        base.sigma = random_spd(10, 6);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const GaussianSpec post = perturb_params(base, 1.0, seed);
            CHECK(testutil::gaussian_kl(base.mu, base.sigma, post.mu, post.sigma) >
                  1e-3);
        }
    }
}

TEST_CASE("the distribution pair is a function of the config seed alone") {
    SimConfig config;
    config.dimension = 6;
    config.seed = 31;
    const auto [pre_a, post_a] = make_gaussian_pair(config);
    config.trials = 99; // unrelated knob
    const auto [pre_b, post_b] = make_gaussian_pair(config);
    CHECK(pre_a.mu == pre_b.mu);
    CHECK(pre_a.sigma == pre_b.sigma);
    CHECK(post_a.mu == post_b.mu);
    CHECK(post_a.sigma == post_b.sigma);

    config.seed = 32;
    const auto [pre_c, post_c] = make_gaussian_pair(config);
    CHECK(pre_a.mu != pre_c.mu);
}

TEST_CASE("simulated series carry the configured change point") {
    SimConfig config;
    config.dimension = 3;
    config.series_length = 40;
    config.change_point = 25;
    config.trials = 4;
    config.seed = 17;

    const TimeSeriesRecord rec = simulate_series(config, 0);
    CHECK(rec.id == "sim-0");
    CHECK(rec.length() == 40);
    CHECK(rec.dim() == 3);
    REQUIRE(rec.true_change_point.has_value());
    CHECK(*rec.true_change_point == 25);

    SUBCASE("bitwise deterministic per trial, distinct across trials") {
        CHECK(simulate_series(config, 0).samples == rec.samples);
        CHECK(simulate_series(config, 1).samples != rec.samples);

        std::set<double> first_values;
        for (int trial = 0; trial < 100; ++trial) {
            SimConfig wide = config;
            wide.trials = 100;
            first_values.insert(simulate_series(wide, trial).samples(0, 0));
        }
        CHECK(first_values.size() == 100);
    }
    SUBCASE("boundary change points are accepted") {
        SimConfig edge = config;
        edge.change_point = 39;
        const TimeSeriesRecord r = simulate_series(edge, 0);
        CHECK(*r.true_change_point == 39);
        edge.change_point = 40;
        CHECK_THROWS(simulate_series(edge, 0));
        edge.change_point = 0;
        CHECK_THROWS(simulate_series(edge, 0));
    }
}

TEST_CASE("segment moments match the generating pair") {
    SimConfig config;
    config.dimension = 2;
    config.series_length = 8000;
    config.change_point = 4000;
    config.perturbation_magnitude = 2.0;
    config.seed = 55;

    const auto [pre, post] = make_gaussian_pair(config);
    const TimeSeriesRecord rec = simulate_series(config, 0);
    const Eigen::MatrixXd head = rec.samples.topRows(4000);
    const Eigen::MatrixXd tail = rec.samples.bottomRows(4000);

    const double bound = 4.0 * std::sqrt(post.sigma.diagonal().maxCoeff() / 4000.0);
    for (int d = 0; d < 2; ++d) {
        CHECK(std::abs(head.col(d).mean() - pre.mu(d)) < bound);
        CHECK(std::abs(tail.col(d).mean() - post.mu(d)) < bound);
    }

    const Eigen::RowVectorXd tail_mean = tail.colwise().mean();
    const Eigen::MatrixXd centered = tail.rowwise() - tail_mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / 3999.0;
    CHECK((cov - post.sigma).norm() < 0.15 * post.sigma.norm());
}

TEST_CASE("dataset assembly") {
    SimConfig config;
    config.dimension = 2;
    config.series_length = 30;
    config.change_point = 15;
    config.trials = 5;
    config.seed = 3;

    const Dataset ds = simulate_dataset(config);
    REQUIRE(ds.records.size() == 5);
    CHECK(ds.dim() == 2);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(ds.records[i].id == "sim-" + std::to_string(i));
        CHECK(*ds.records[i].true_change_point == 15);
    }
    CHECK_THROWS(simulate_dataset([&] {
        SimConfig bad = config;
        bad.trials = 0;
        return bad;
    }()));
}

} // TEST_SUITE
