#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "wonder/ridge.hpp"
#include "wonder/rng.hpp"
#include "wonder/spectral.hpp"

using namespace wonder;
using ridge::DesignMatrix;

namespace {

Eigen::VectorXd gaussian_vector(Eigen::Index n, std::uint64_t seed) {
    rng::Stream st(seed);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = st.gaussian();
    return v;
}

} // namespace

TEST_CASE("design matrix caches a faithful thin SVD") {
    for (std::uint64_t seed : {11u, 12u}) {
        const Eigen::Index n = seed == 11u ? 40 : 12, p = seed == 11u ? 12 : 40;
        const Eigen::MatrixXd X = oracle::gaussian_matrix(n, p, seed);
        const DesignMatrix dm(X);
        const Eigen::MatrixXd rebuilt = dm.left_vectors() *
                                        dm.singular_values().asDiagonal() *
                                        dm.right_vectors().transpose();
        CHECK((rebuilt - X).norm() / X.norm() < 1e-8);
        CHECK(dm.singular_values().size() == std::min(n, p));
        CHECK(dm.cov_eigenvalues().size() == p);
    }
    CHECK_THROWS_AS(DesignMatrix(Eigen::MatrixXd(0, 3)), std::invalid_argument);
}

TEST_CASE("ridge fit: identity design solves coordinatewise") {
    const Eigen::Index p = 7;
    const DesignMatrix X(Eigen::MatrixXd::Identity(p, p));
    const Eigen::VectorXd Y = gaussian_vector(p, 21);
    const auto fit = ridge_fit(X, Y, 1.0);
    for (Eigen::Index j = 0; j < p; ++j)
        CHECK(std::abs(fit.coefficients(j) - Y(j) / (1.0 + static_cast<double>(p))) <
              1e-12);
}

TEST_CASE("ridge fit: huge penalty shrinks to zero at the 1/lambda scale") {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(30, 6, 7);
    const Eigen::VectorXd Y = gaussian_vector(30, 8);
    const DesignMatrix dm(X);
    const auto fit = ridge_fit(dm, Y, 1e10);
    const double bound = (X.transpose() * Y).norm() / (30.0 * 1e10);
    CHECK(fit.coefficients.norm() <= bound * 1.0001);
}

TEST_CASE("ridge fit matches the dense normal-equations oracle") {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(50, 10, 31);
    const Eigen::VectorXd Y = gaussian_vector(50, 32);
    const DesignMatrix dm(X);
    for (double lambda : {0.01, 0.5, 3.0}) {
        const auto fit = ridge_fit(dm, Y, lambda);
        const Eigen::VectorXd ref = oracle::ridge_normal_equations(X, Y, lambda);
        CHECK((fit.coefficients - ref).norm() / ref.norm() < 1e-8);
    }
    CHECK_THROWS_AS(ridge_fit(dm, Y, 0.0), std::domain_error);
    CHECK_THROWS_AS(ridge_fit(dm, gaussian_vector(49, 5), 1.0), std::invalid_argument);
}

TEST_CASE("SVD and normal-equation paths agree across random instances") {
    rng::Stream st(99);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(st.uniform_below(99));
        const Eigen::Index p = 1 + static_cast<Eigen::Index>(st.uniform_below(99));
        const Eigen::MatrixXd X = oracle::gaussian_matrix(n, p, 1000 + trial);
        const Eigen::VectorXd Y = gaussian_vector(n, 2000 + trial);
        const double lambda = 0.05 * std::pow(40.0, st.uniform());
        const auto fit = ridge_fit(DesignMatrix(X), Y, lambda);
        const Eigen::VectorXd ref = oracle::ridge_normal_equations(X, Y, lambda);
        CHECK((fit.coefficients - ref).norm() <=
              1e-8 * std::max(1.0, ref.norm()));
    }
}

TEST_CASE("trace functionals: unit spectrum and rank-deficient designs") {
    const Eigen::Index p = 6;
    // X = sqrt(n) * I gives sample covariance I.
    const DesignMatrix unit(std::sqrt(6.0) * Eigen::MatrixXd::Identity(p, p));
    const auto tf = trace_functionals(unit, 1.0);
    CHECK(std::abs(tf.m_hat - 0.5) < 1e-12);
    CHECK(std::abs(tf.mprime_hat - 0.25) < 1e-12);

    // n < p: the p - n zero eigenvalues contribute 1/lambda each.
    const Eigen::MatrixXd X = oracle::gaussian_matrix(3, 5, 77);
    const DesignMatrix thin(X);
    const double lambda = 0.7;
    const auto tf2 = trace_functionals(thin, lambda);
    const Eigen::VectorXd ell = thin.cov_eigenvalues();
    double m = 0.0, mp = 0.0;
    for (Eigen::Index j = 0; j < 5; ++j) {
        m += 1.0 / (ell(j) + lambda) / 5.0;
        mp += 1.0 / ((ell(j) + lambda) * (ell(j) + lambda)) / 5.0;
    }
    CHECK(std::abs(tf2.m_hat - m) < 1e-12);
    CHECK(std::abs(tf2.mprime_hat - mp) < 1e-12);
    CHECK(ell(3) == 0.0);
    CHECK(ell(4) == 0.0);
}

TEST_CASE("trace functionals concentrate at the MP transform for white designs") {
    const Eigen::Index n = 1000, p = 1000;
    const DesignMatrix dm(oracle::gaussian_matrix(n, p, 4242));
    const auto tf = trace_functionals(dm, 1.0);
    CHECK(std::abs(tf.m_hat - spectral::mp_stieltjes_isotropic(1.0, 1.0)) < 0.02);
}

TEST_CASE("trace functionals satisfy the Jensen inequality mprime >= m^2") {
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 5 + 7 * trial % 60, p = 3 + 5 * trial % 40;
        const DesignMatrix dm(oracle::gaussian_matrix(std::max<Eigen::Index>(n, 1),
                                                      std::max<Eigen::Index>(p, 1),
                                                      500 + trial));
        for (double lambda : {0.1, 1.0, 10.0}) {
            const auto tf = trace_functionals(dm, lambda);
            CHECK(tf.mprime_hat + 1e-15 >= tf.m_hat * tf.m_hat);
        }
    }
}

TEST_CASE("finite-sample weights: full-rank noiseless single shard") {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(40, 8, 51);
    const Eigen::VectorXd beta = gaussian_vector(8, 52);
    const DesignMatrix dm(X);
    const auto ow = ridge::finite_sample_weights({&dm}, beta, 0.0, {1e-10});
    CHECK(std::abs(ow.w_star(0) - 1.0) < 1e-6);
    CHECK(ow.mse_star <= 1e-6 * beta.squaredNorm());
}

TEST_CASE("finite-sample weights: identical shards get identical weights") {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(25, 5, 61);
    const Eigen::VectorXd beta = gaussian_vector(5, 62);
    const DesignMatrix a(X), b(X);
    const auto ow = ridge::finite_sample_weights({&a, &b}, beta, 1.0, {0.5, 0.5});
    CHECK(std::abs(ow.w_star(0) - ow.w_star(1)) < 1e-10);
}

TEST_CASE("finite-sample weights match the dense quadratic oracle") {
    rng::Stream st(7777);
    const Eigen::Index n = 30, p = 5;
    const Eigen::MatrixXd X1 = oracle::gaussian_matrix(n / 2, p, 71);
    const Eigen::MatrixXd X2 = oracle::gaussian_matrix(n - n / 2, p, 72);
    const Eigen::VectorXd beta = gaussian_vector(p, 73);
    const double sigma2 = 1.0;
    const std::vector<double> lambdas{0.4, 0.9};

    const DesignMatrix d1(X1), d2(X2);
    const auto ow = ridge::finite_sample_weights({&d1, &d2}, beta, sigma2, lambdas);

    // Independent path: B columns via dense LU solves, R via dense inverses,
    // then the 2x2 normal equations solved directly.
    Eigen::MatrixXd B(p, 2);
    B.col(0) = oracle::q_beta_dense(X1, beta, lambdas[0]);
    B.col(1) = oracle::q_beta_dense(X2, beta, lambdas[1]);
    Eigen::MatrixXd S = B.transpose() * B;
    S(0, 0) += sigma2 / X1.rows() * oracle::noise_trace_dense(X1, lambdas[0]);
    S(1, 1) += sigma2 / X2.rows() * oracle::noise_trace_dense(X2, lambdas[1]);
    const Eigen::VectorXd v = B.transpose() * beta;
    const Eigen::VectorXd w_ref = S.fullPivLu().solve(v);
    CHECK((ow.w_star - w_ref).norm() < 1e-8);

    // w* minimizes the explicit quadratic against 1000 random probes.
    const double m_star = ridge::oracle_mse_of_weights(ow.moments, ow.w_star,
                                                       beta.squaredNorm());
    CHECK(std::abs(m_star - ow.mse_star) < 1e-10);
    for (int probe = 0; probe < 1000; ++probe) {
        Eigen::VectorXd w(2);
        w << 4.0 * st.uniform() - 1.0, 4.0 * st.uniform() - 1.0;
        CHECK(ridge::oracle_mse_of_weights(ow.moments, w, beta.squaredNorm()) + 1e-12 >=
              m_star);
    }
}

TEST_CASE("oracle MSE: zero weights return the signal energy") {
    const Eigen::MatrixXd X = oracle::gaussian_matrix(20, 4, 81);
    const Eigen::VectorXd beta = gaussian_vector(4, 82);
    const DesignMatrix dm(X);
    const auto ow = ridge::finite_sample_weights({&dm}, beta, 1.0, {1.0});
    CHECK(std::abs(ridge::oracle_mse_of_weights(ow.moments, Eigen::VectorXd::Zero(1),
                                                beta.squaredNorm()) -
                   beta.squaredNorm()) < 1e-12);
    CHECK_THROWS_AS(ridge::oracle_mse_of_weights(ow.moments, Eigen::VectorXd::Zero(3),
                                                 beta.squaredNorm()),
                    std::invalid_argument);
}

TEST_CASE("oracle MSE agrees with Monte Carlo over noise draws") {
    const Eigen::Index n = 60, p = 8;
    const int k = 3, draws = 2000;
    const Eigen::VectorXd beta = gaussian_vector(p, 91);
    const double sigma2 = 1.0;
    std::vector<Eigen::MatrixXd> xs;
    std::vector<DesignMatrix> dms;
    for (int i = 0; i < k; ++i) xs.push_back(oracle::gaussian_matrix(n / k, p, 92 + i));
    for (int i = 0; i < k; ++i) dms.emplace_back(xs[static_cast<std::size_t>(i)]);
    const std::vector<double> lambdas{0.5, 0.8, 1.2};
    const std::vector<const DesignMatrix*> ptrs{&dms[0], &dms[1], &dms[2]};
    const auto mom = ridge::finite_sample_moments(ptrs, beta, sigma2, lambdas);

    Eigen::VectorXd w(3);
    w << 0.5, 0.3, 0.4;
    const double predicted = ridge::oracle_mse_of_weights(mom, w, beta.squaredNorm());

    rng::Stream st(93);
    double sum = 0.0, sum2 = 0.0;
    for (int d = 0; d < draws; ++d) {
        Eigen::VectorXd est = Eigen::VectorXd::Zero(p);
        for (int i = 0; i < k; ++i) {
            Eigen::VectorXd eps(n / k);
            for (Eigen::Index r = 0; r < n / k; ++r) eps(r) = st.gaussian();
            const Eigen::VectorXd Y =
                xs[static_cast<std::size_t>(i)] * beta + std::sqrt(sigma2) * eps;
            est += w(i) *
                   ridge_fit(dms[static_cast<std::size_t>(i)], Y,
                             lambdas[static_cast<std::size_t>(i)])
                       .coefficients;
        }
        const double loss = (est - beta).squaredNorm();
        sum += loss;
        sum2 += loss * loss;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
    CHECK(std::abs(mean - predicted) <= 3.0 * se);
}

TEST_CASE("optimal oracle MSE cannot increase when the estimator pool grows") {
    const Eigen::Index n = 120, p = 10;
    const int k_max = 6;
    const Eigen::MatrixXd X = oracle::gaussian_matrix(n, p, 101);
    const Eigen::VectorXd beta = gaussian_vector(p, 102);
    std::vector<DesignMatrix> dms;
    for (int i = 0; i < k_max; ++i)
        dms.emplace_back(X.middleRows(i * (n / k_max), n / k_max));
    double prev = beta.squaredNorm();
    for (int k = 1; k <= k_max; ++k) {
        std::vector<const DesignMatrix*> ptrs;
        std::vector<double> lambdas;
        for (int i = 0; i < k; ++i) {
            ptrs.push_back(&dms[static_cast<std::size_t>(i)]);
            lambdas.push_back(0.6);
        }
        const auto ow = ridge::finite_sample_weights(ptrs, beta, 1.0, lambdas);
        CHECK(ow.mse_star <= prev + 1e-12);
        prev = ow.mse_star;
    }
}

TEST_CASE("optimal weights sum above one under the random-effects prior") {
    const Eigen::Index n = 1000, p = 100;
    const int k = 5, trials = 30;
    const double gamma = 0.1, alpha2 = 1.0, sigma2 = 1.0;
    int above = 0;
    for (int t = 0; t < trials; ++t) {
        rng::Stream bs(rng::derive(31337, rng::kTagBeta, static_cast<std::uint64_t>(t)));
        Eigen::VectorXd beta(p);
        const double sd = std::sqrt(sigma2 * alpha2 / static_cast<double>(p));
        for (Eigen::Index j = 0; j < p; ++j) beta(j) = sd * bs.gaussian();
        std::vector<DesignMatrix> dms;
        std::vector<const DesignMatrix*> ptrs;
        for (int i = 0; i < k; ++i)
            dms.emplace_back(oracle::gaussian_matrix(n / k, p,
                                                     9000 + 10 * t + i));
        for (const auto& d : dms) ptrs.push_back(&d);
        const std::vector<double> lambdas(k, k * gamma / alpha2);
        const auto ow = ridge::finite_sample_weights(ptrs, beta, sigma2, lambdas);
        if (ow.w_star.sum() > 1.0) ++above;
    }
    CHECK(above >= 27); // >= 90% of trials
}

TEST_CASE("singular combination system surfaces an error") {
    // Zero noise and duplicated shards make A + R exactly singular.
    const Eigen::MatrixXd X = oracle::gaussian_matrix(20, 4, 111);
    const Eigen::VectorXd beta = gaussian_vector(4, 112);
    const DesignMatrix a(X), b(X);
    CHECK_THROWS_AS(ridge::finite_sample_weights({&a, &b}, beta, 0.0, {1.0, 1.0}),
                    std::runtime_error);
}
