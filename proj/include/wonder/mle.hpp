#pragma once

/*
 * mle.hpp — Gaussian maximum likelihood for theta = (sigma2, alpha2).
 *
 * Under the random-effects model the marginal distribution of Y given X is
 * N(0, sigma2 * ((alpha2/p) X X' + I)), giving the normalized log-likelihood
 *
 *   l(theta) = -1/2 log sigma2 - 1/(2n) log det((alpha2/p) XX' + I)
 *              - 1/(2 sigma2 n) Y' ((alpha2/p) XX' + I)^{-1} Y.
 *
 * GramSpectrum factors this once through the SVD of X: with mu_j = s_j^2/p
 * the min(n,p) nonzero eigenvalues of XX'/p and c_j = (u_j'Y)^2,
 *
 *   log det = sum_j log(alpha2*mu_j + 1)      (the n - r zero modes add 0)
 *   Y'(.)^{-1}Y = sum_j c_j/(alpha2*mu_j + 1) + |Y_perp|^2,
 *
 * so each (sigma2, alpha2) evaluation is O(r).
 *
 * fit_mle maximizes l over sigma2 in [1e-8, 1e8], alpha2 in [0, 1e8] with a
 * 16x16 logarithmic grid followed by cyclic per-coordinate golden-section
 * refinement. alpha2 = 0 is an admissible boundary optimum.
 */

#include <Eigen/Dense>

#include <vector>

#include "wonder/ridge.hpp"
#include "wonder/spectral.hpp"

namespace wonder::mle {

using spectral::SignalNoise;

struct ThetaEstimate {
    double sigma2_hat = 0.0;
    double alpha2_hat = 0.0;
    double loglik = 0.0;
    bool converged = false;
};

class GramSpectrum {
public:
    GramSpectrum(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y);
    GramSpectrum(const ridge::DesignMatrix& X, const Eigen::VectorXd& Y);

    double loglik(const SignalNoise& theta) const;
    Eigen::Index n() const { return n_; }
    const Eigen::VectorXd& gram_eigenvalues() const { return mu_; }

private:
    void init(const Eigen::VectorXd& s, const Eigen::VectorXd& uty, double y2,
              Eigen::Index n, Eigen::Index p);

    Eigen::VectorXd mu_;    // nonzero eigenvalues of XX'/p
    Eigen::VectorXd ysq_;   // squared projections (u_j'Y)^2
    double y_perp2_ = 0.0;  // |Y|^2 minus the projected part
    Eigen::Index n_ = 0;
};

double gaussian_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                       const SignalNoise& theta);

ThetaEstimate fit_mle(const GramSpectrum& spectrum);
ThetaEstimate fit_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y);

// Fisher information entries I_k = tr[(XX'/p)^{k-2} ((alpha2/p)XX'+I)^{2-k}]
// / (2 n sigma^{8-2k}) for k = 2, 3, 4, arranged as [[I2, I3], [I3, I4]].
struct FisherInfo {
    double i2 = 0.0;
    double i3 = 0.0;
    double i4 = 0.0;

    Eigen::Matrix2d matrix() const {
        Eigen::Matrix2d M;
        M << i2, i3, i3, i4;
        return M;
    }
};

FisherInfo fisher_information(const Eigen::MatrixXd& X, const SignalNoise& theta);
FisherInfo fisher_information(const GramSpectrum& spectrum, const SignalNoise& theta);

enum class ThetaAggregation { mean, inverse_variance };

// Combine per-shard estimates. mean: coordinatewise average. inverse_variance:
// each coordinate weighted by the matching diagonal Fisher entry (I2 for
// sigma2, I4 for alpha2), normalized across shards.
ThetaEstimate aggregate_theta(const std::vector<ThetaEstimate>& estimates,
                              ThetaAggregation mode,
                              const std::vector<FisherInfo>* infos = nullptr);

} // namespace wonder::mle
