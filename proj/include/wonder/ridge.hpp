#pragma once

/*
 * ridge.hpp — deterministic linear-algebra layer.
 *
 * DesignMatrix caches a thin SVD X = U diag(s) V' once; every ridge fit,
 * trace functional and moment evaluation afterwards reuses it, so a whole
 * lambda grid costs one factorization. Penalty convention:
 *
 *   beta_hat(lambda) = (X'X + n*lambda*I)^{-1} X'Y
 *                    = V diag(s_j / (s_j^2 + n*lambda)) U'Y.
 *
 * Sample covariance eigenvalues are l_j = s_j^2 / n; when n < p the p - n
 * zero eigenvalues are carried explicitly (they contribute nothing to the
 * fit but 1/lambda terms to the trace functionals).
 *
 * finite_sample_weights implements the exact optimal combination of local
 * ridge estimators when the true beta and sigma2 are known (simulation /
 * oracle mode): w* = (A+R)^{-1} v with
 *
 *   v_i  = beta' Q_i beta,          Q_i = (S_i + lambda_i I)^{-1} S_i,
 *   A_ij = beta' Q_i Q_j beta,      S_i = sample covariance of shard i,
 *   R_ii = sigma2/n_i * tr[(S_i + lambda_i I)^{-2} S_i],
 *
 * and MSE(w) = w'(A+R)w - 2 v'w + |beta|^2, minimized at w*.
 */

#include <Eigen/Dense>

#include <vector>

namespace wonder::ridge {

class DesignMatrix {
public:
    explicit DesignMatrix(Eigen::MatrixXd X);

    Eigen::Index rows() const { return X_.rows(); }
    Eigen::Index cols() const { return X_.cols(); }
    const Eigen::MatrixXd& matrix() const { return X_; }
    const Eigen::MatrixXd& left_vectors() const { return U_; }
    const Eigen::MatrixXd& right_vectors() const { return V_; }
    const Eigen::VectorXd& singular_values() const { return s_; }

    // All p eigenvalues of the sample covariance X'X/n, zeros included.
    Eigen::VectorXd cov_eigenvalues() const;

private:
    Eigen::MatrixXd X_;
    Eigen::MatrixXd U_; // n x r
    Eigen::MatrixXd V_; // p x r
    Eigen::VectorXd s_; // r = min(n, p)
};

struct RidgeFit {
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
    Eigen::Index n = 0; // shard size
};

RidgeFit ridge_fit(const DesignMatrix& X, const Eigen::VectorXd& Y, double lambda);

// m_hat = tr[(S + lambda I)^{-1}]/p and mprime_hat = tr[(S + lambda I)^{-2}]/p,
// plug-in estimates of the Stieltjes transform and its derivative at -lambda.
struct TraceFunctionals {
    double m_hat;
    double mprime_hat;
};

TraceFunctionals trace_functionals(const DesignMatrix& X, double lambda);

struct FiniteSampleMoments {
    Eigen::VectorXd v;
    Eigen::MatrixXd A;
    Eigen::VectorXd R; // diagonal entries
};

struct OracleWeights {
    Eigen::VectorXd w_star;
    double mse_star;
    FiniteSampleMoments moments;
};

FiniteSampleMoments finite_sample_moments(
    const std::vector<const DesignMatrix*>& shards, const Eigen::VectorXd& beta,
    double sigma2, const std::vector<double>& lambdas);

OracleWeights finite_sample_weights(const std::vector<const DesignMatrix*>& shards,
                                    const Eigen::VectorXd& beta, double sigma2,
                                    const std::vector<double>& lambdas);

// Exact MSE of an arbitrary weight vector given the moments.
double oracle_mse_of_weights(const FiniteSampleMoments& mom,
                             const Eigen::VectorXd& w, double beta_norm2);

} // namespace wonder::ridge
