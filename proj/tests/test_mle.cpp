#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "wonder/data.hpp"
#include "wonder/mle.hpp"
#include "wonder/rng.hpp"

using namespace wonder;
using mle::GramSpectrum;
using spectral::SignalNoise;

namespace {

Eigen::VectorXd gaussian_vector(Eigen::Index n, std::uint64_t seed) {
    rng::Stream st(seed);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = st.gaussian();
    return v;
}

} // namespace

TEST_CASE("log-likelihood: zero signal reduces to the white Gaussian form") {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(30, 8, 1);
    const Eigen::VectorXd Y = gaussian_vector(30, 2);
    for (double s2 : {0.3, 1.0, 2.5}) {
        const double expected =
            -0.5 * std::log(s2) - Y.squaredNorm() / (2.0 * s2 * 30.0);
        CHECK(std::abs(mle::gaussian_loglik(X, Y, SignalNoise{s2, 0.0}) - expected) <
              1e-12);
    }
    // The zero-signal profile is maximized at sigma2 = |Y|^2 / n.
    const double s_hat = Y.squaredNorm() / 30.0;
    const double at_hat = mle::gaussian_loglik(X, Y, SignalNoise{s_hat, 0.0});
    for (double s2 : {0.5 * s_hat, 2.0 * s_hat})
        CHECK(at_hat > mle::gaussian_loglik(X, Y, SignalNoise{s2, 0.0}));
    CHECK_THROWS_AS(mle::gaussian_loglik(X, Y, SignalNoise{0.0, 1.0}),
                    std::domain_error);
}

TEST_CASE("log-likelihood matches the dense oracle, both aspect regimes") {
    for (auto dims : {std::pair<Eigen::Index, Eigen::Index>{20, 5},
                      std::pair<Eigen::Index, Eigen::Index>{12, 30}}) {
        const Eigen::MatrixXd X = oracle::gaussian_matrix(dims.first, dims.second, 3);
        const Eigen::VectorXd Y = gaussian_vector(dims.first, 4);
        for (double s2 : {0.5, 1.0, 4.0})
            for (double a2 : {0.0, 0.7, 3.0})
                CHECK(std::abs(mle::gaussian_loglik(X, Y, SignalNoise{s2, a2}) -
                               oracle::loglik_dense(X, Y, s2, a2)) < 1e-8);
    }
}

TEST_CASE("log-likelihood spectrum path equals dense path on many small instances") {
    rng::Stream st(55);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(st.uniform_below(49));
        const Eigen::Index p = 1 + static_cast<Eigen::Index>(st.uniform_below(50));
        const Eigen::MatrixXd X = oracle::gaussian_matrix(n, p, 600 + trial);
        const Eigen::VectorXd Y = gaussian_vector(n, 700 + trial);
        const double s2 = 0.2 + 2.0 * st.uniform();
        const double a2 = 2.0 * st.uniform();
        CHECK(std::abs(mle::gaussian_loglik(X, Y, SignalNoise{s2, a2}) -
                       oracle::loglik_dense(X, Y, s2, a2)) < 1e-8);
    }
}

TEST_CASE("MLE recovers the generating parameters at moderate scale") {
    // Smoke-scale version; the acceptance suite runs the full 2000 x 400 study.
    double abs_a = 0.0, abs_s = 0.0;
    const int seeds = 5;
    for (int s = 0; s < seeds; ++s) {
        data::SynthSpec spec;
        spec.n = 1000;
        spec.p = 200;
        spec.alpha2 = 1.0;
        spec.sigma2 = 1.0;
        spec.seed = 4000 + static_cast<std::uint64_t>(s);
        const auto ds = data::generate(spec, par::Mode::serial);
        const auto est = mle::fit_mle(ds.X, ds.Y);
        CHECK(est.converged);
        abs_a += std::abs(est.alpha2_hat - 1.0) / seeds;
        abs_s += std::abs(est.sigma2_hat - 1.0) / seeds;
    }
    CHECK(abs_a <= 0.25);
    CHECK(abs_s <= 0.15);
}

TEST_CASE("MLE on pure noise estimates a near-zero signal") {
    int small = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        data::SynthSpec spec;
        spec.n = 800;
        spec.p = 160;
        spec.alpha2 = 0.0; // beta = 0
        spec.sigma2 = 1.0;
        spec.seed = 8800 + static_cast<std::uint64_t>(s);
        const auto ds = data::generate(spec, par::Mode::serial);
        const auto est = mle::fit_mle(ds.X, ds.Y);
        if (est.alpha2_hat <= 0.1) ++small;
    }
    CHECK(small >= 18); // >= 90% of seeds
}

TEST_CASE("MLE argmax transforms correctly under response scaling") {
    data::SynthSpec spec;
    spec.n = 600;
    spec.p = 120;
    spec.seed = 97;
    const auto ds = data::generate(spec, par::Mode::serial);
    const auto base = mle::fit_mle(ds.X, ds.Y);
    const double c = 3.0;
    const auto scaled = mle::fit_mle(ds.X, (c * ds.Y).eval());
    CHECK(std::abs(scaled.sigma2_hat / (c * c * base.sigma2_hat) - 1.0) < 1e-4);
    CHECK(std::abs(scaled.alpha2_hat - base.alpha2_hat) <
          1e-4 * std::max(1.0, base.alpha2_hat));
}

TEST_CASE("MLE output is a local maximum for interior solutions") {
    data::SynthSpec spec;
    spec.n = 500;
    spec.p = 100;
    spec.seed = 181;
    const auto ds = data::generate(spec, par::Mode::serial);
    const GramSpectrum spectrum(ds.X, ds.Y);
    const auto est = mle::fit_mle(spectrum);
    REQUIRE(est.alpha2_hat > 2e-3);
    REQUIRE(est.sigma2_hat > 2e-3);
    const double l0 = spectrum.loglik(SignalNoise{est.sigma2_hat, est.alpha2_hat});
    for (double ds2 : {-1e-3, 1e-3})
        CHECK(l0 >= spectrum.loglik(SignalNoise{est.sigma2_hat + ds2, est.alpha2_hat}));
    for (double da2 : {-1e-3, 1e-3})
        CHECK(l0 >= spectrum.loglik(SignalNoise{est.sigma2_hat, est.alpha2_hat + da2}));
    // Dominates the coarse grid by construction.
    for (double s2 : {1e-8, 1e-4, 1.0, 1e4})
        for (double a2 : {0.0, 1e-4, 1.0, 1e4})
            CHECK(est.loglik + 1e-12 >= spectrum.loglik(SignalNoise{s2, a2}));
}

TEST_CASE("Fisher information: zero-signal closed forms and dense oracle") {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(25, 10, 201);
    const double s2 = 1.7;
    const GramSpectrum spec(X, Eigen::VectorXd::Zero(25));
    const auto info = mle::fisher_information(spec, SignalNoise{s2, 0.0});
    const Eigen::MatrixXd G = X * X.transpose() / 10.0;
    CHECK(std::abs(info.i2 - 1.0 / (2.0 * s2 * s2)) < 1e-12);
    CHECK(std::abs(info.i3 - G.trace() / (2.0 * 25.0 * s2)) < 1e-10);
    CHECK(std::abs(info.i4 - (G * G).trace() / (2.0 * 25.0)) < 1e-10);

    double i2 = 0.0, i3 = 0.0, i4 = 0.0;
    oracle::fisher_dense(X, 0.8, 1.3, i2, i3, i4);
    const auto info2 = mle::fisher_information(X, SignalNoise{0.8, 1.3});
    CHECK(std::abs(info2.i2 - i2) < 1e-10);
    CHECK(std::abs(info2.i3 - i3) < 1e-10);
    CHECK(std::abs(info2.i4 - i4) < 1e-10);
}

TEST_CASE("Fisher information matrix is positive semidefinite") {
    rng::Stream st(303);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 3 + static_cast<Eigen::Index>(st.uniform_below(30));
        const Eigen::Index p = 2 + static_cast<Eigen::Index>(st.uniform_below(30));
        const Eigen::MatrixXd X = oracle::gaussian_matrix(n, p, 5000 + trial);
        const SignalNoise theta{0.1 + 3.0 * st.uniform(), 3.0 * st.uniform()};
        const auto info = mle::fisher_information(X, theta);
        const Eigen::Matrix2d M = info.matrix();
        CHECK(M(0, 0) >= 0.0);
        CHECK(M(1, 1) >= 0.0);
        CHECK(M.determinant() >= -1e-10);
    }
}

TEST_CASE("Fisher entries approach the spectral integral limit") {
    const Eigen::Index n = 2000, p = 1000;
    const SignalNoise theta{1.0, 1.0};
    const auto info = mle::fisher_information(
        GramSpectrum(oracle::gaussian_matrix(n, p, 717), Eigen::VectorXd::Zero(n)),
        theta);
    // Monte Carlo spectral integral from an independent draw.
    const GramSpectrum ref(oracle::gaussian_matrix(n, p, 718), Eigen::VectorXd::Zero(n));
    double j3 = 0.0, j4 = 0.0;
    for (Eigen::Index j = 0; j < ref.gram_eigenvalues().size(); ++j) {
        const double s = ref.gram_eigenvalues()(j);
        const double r = s / (theta.alpha2 * s + 1.0);
        j3 += r / static_cast<double>(n);
        j4 += r * r / static_cast<double>(n);
    }
    j3 /= 2.0 * theta.sigma2;
    j4 /= 2.0;
    CHECK(std::abs(info.i3 - j3) / j3 < 0.03);
    CHECK(std::abs(info.i4 - j4) / j4 < 0.03);
}

TEST_CASE("theta aggregation: mean and inverse-variance modes") {
    mle::ThetaEstimate a{1.0, 1.0, -1.0, true};
    mle::ThetaEstimate b{3.0, 3.0, -2.0, true};
    const auto mean = mle::aggregate_theta({a, b}, mle::ThetaAggregation::mean);
    CHECK(mean.sigma2_hat == doctest::Approx(2.0));
    CHECK(mean.alpha2_hat == doctest::Approx(2.0));

    std::vector<mle::FisherInfo> infos(2);
    infos[0].i2 = 1.0;
    infos[0].i4 = 1.0;
    infos[1].i2 = 3.0;
    infos[1].i4 = 3.0;
    const auto iv = mle::aggregate_theta({a, b}, mle::ThetaAggregation::inverse_variance,
                                         &infos);
    CHECK(iv.sigma2_hat == doctest::Approx(0.25 * 1.0 + 0.75 * 3.0));
    CHECK(iv.alpha2_hat == doctest::Approx(2.5));

    const auto same = mle::aggregate_theta({a, a}, mle::ThetaAggregation::mean);
    std::vector<mle::FisherInfo> eq(2, infos[0]);
    const auto same_iv =
        mle::aggregate_theta({a, a}, mle::ThetaAggregation::inverse_variance, &eq);
    CHECK(same.sigma2_hat == doctest::Approx(same_iv.sigma2_hat));
    CHECK(same.alpha2_hat == doctest::Approx(same_iv.alpha2_hat));

    CHECK_THROWS_AS(mle::aggregate_theta({}, mle::ThetaAggregation::mean),
                    std::invalid_argument);
    CHECK_THROWS_AS(mle::aggregate_theta({a, b}, mle::ThetaAggregation::inverse_variance),
                    std::invalid_argument);
}

TEST_CASE("per-shard MLEs concentrate across shards of one dataset") {
    data::SynthSpec spec;
    spec.n = 10000;
    spec.p = 500;
    spec.seed = 515;
    const auto ds = data::generate(spec, par::Mode::serial);
    const int k = 10;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < k; ++i) {
        const Eigen::Index rows = spec.n / k;
        const auto est = mle::fit_mle(ds.X.middleRows(i * rows, rows),
                                      ds.Y.segment(i * rows, rows));
        mean += est.alpha2_hat / k;
        m2 += est.alpha2_hat * est.alpha2_hat / k;
    }
    CHECK(std::sqrt(std::max(0.0, m2 - mean * mean)) <= 0.3);
}
