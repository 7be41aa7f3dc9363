#pragma once

/*
 * spectral.hpp — random-matrix limits for optimally weighted distributed ridge.
 *
 * Everything here is a deterministic function of scalar model parameters:
 *
 *   gamma   aspect ratio p/n (per shard: gamma_i = p/n_i)
 *   lambda  ridge penalty, estimator (X'X + n*lambda*I)^{-1} X'Y
 *   theta   (sigma2, alpha2) = noise level and signal-to-noise ratio of the
 *           random-effects model  Y = X*beta + eps,  Var(beta_j) =
 *           sigma2*alpha2/p,  Var(eps_i) = sigma2
 *
 * Core objects:
 *
 *   m_gamma(-lambda)   Marchenko-Pastur Stieltjes transform of the sample
 *                      covariance spectrum, identity population covariance:
 *                        m = [(-l+g-1) + sqrt((-l+g-1)^2 + 4lg)] / (2lg)
 *   x_i                companion fixed point for general population spectrum
 *                      H:  1 - x = gamma_i * (1 - E_H[ lambda/(x*T+lambda) ])
 *                      which makes (x*Sigma + lambda*I)^{-1} a deterministic
 *                      equivalent of (Sigma_hat + lambda*I)^{-1}.
 *   V, A, R            limits of the per-shard moment functionals whose
 *                      finite-sample versions define the optimal combination
 *                      weights w* = (A+R)^{-1} v; the limiting distributed
 *                      risk is M_k = sigma2*alpha2 - V'(A+R)^{-1}V.
 *
 * Scalar summaries at optimal tuning lambda_i = gamma_i/alpha2:
 *
 *   phi(gamma)  = gamma * m_gamma(-gamma/alpha2)      (optimal single-machine
 *                 risk up to sigma2; increasing, 0 -> alpha2)
 *   psi(k, ...) asymptotic relative efficiency M_1/M_k of one-shot
 *                 distributed ridge over k equal shards
 *   h           infinite-worker limit of psi (k -> inf), strictly positive
 *   W           optimal per-shard weight; k*W >= 1, strict for k >= 2
 *   OE          out-of-sample (prediction) relative efficiency, O_k =
 *                 sigma2 + M_k
 *
 * All functions are pure and thread-safe. Scalar inputs gamma and lambda are
 * accepted in [1e-10, 1e10]; values outside raise std::domain_error rather
 * than switching to asymptotic expansions.
 */

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace wonder::spectral {

inline constexpr double kScalarMin = 1e-10;
inline constexpr double kScalarMax = 1e10;

// Discrete population spectral distribution H: atoms t_j >= 0 with positive
// masses summing to one. Continuous spectra must be discretized by the
// caller; expectations E_H[f(T)] are then exact finite sums.
struct SpectralDistribution {
    std::vector<double> atoms;
    std::vector<double> masses;

    SpectralDistribution(std::vector<double> atoms_in,
                         std::vector<double> masses_in);

    static SpectralDistribution point_mass(double atom = 1.0);

    template <class F>
    double expect(F&& f) const {
        double s = 0.0;
        for (std::size_t j = 0; j < atoms.size(); ++j) s += masses[j] * f(atoms[j]);
        return s;
    }
};

// Random-effects model parameters theta = (sigma2, alpha2), both >= 0.
struct SignalNoise {
    double sigma2 = 1.0;
    double alpha2 = 1.0;

    void validate() const;
};

// Aspect ratios: global gamma = lim p/n and per-shard gamma_i = lim p/n_i.
struct AspectRatio {
    double gamma = 1.0;
    std::vector<double> shard_gammas;

    AspectRatio(double gamma_in, std::vector<double> shard_gammas_in);
    static AspectRatio equal_split(double gamma, int k);
};

// Limits of the per-shard moment functionals V, A, R together with the
// companion fixed points x_i used to evaluate them.
struct AsymptoticMoments {
    Eigen::VectorXd V;            // k-vector
    Eigen::MatrixXd A;            // k x k, symmetric
    Eigen::VectorXd R;            // diagonal of the noise matrix
    std::vector<double> x;        // companion fixed points, x_i in (0, 1]
};

// Marchenko-Pastur Stieltjes transform m_gamma(z) evaluated at z = -lambda,
// identity population covariance. Strictly positive for lambda > 0.
double mp_stieltjes_isotropic(double gamma, double lambda);

// d m_gamma / dz at z = -lambda, from differentiating the defining quadratic
// gamma*z*m^2 - (1 - gamma - z)*m + 1 = 0. Positive for lambda > 0.
double mp_stieltjes_derivative_isotropic(double gamma, double lambda);

// Solve 1 - x = gamma_i * (1 - E_H[lambda_i/(x*T + lambda_i)]) for x in (0,1].
// Damped fixed-point iteration from x0 = 1 with a bisection fallback;
// converged residual <= 1e-12 (hard failure above 1e-10).
double solve_companion_x(const SpectralDistribution& H, double gamma_i,
                         double lambda_i);

// Evaluate V, A, R for shards with aspect ratios gammas and penalties lambdas
// under population spectrum H, via exact sums over H's atoms.
AsymptoticMoments asymptotic_moments(const SpectralDistribution& H,
                                     std::span<const double> gammas,
                                     std::span<const double> lambdas,
                                     const SignalNoise& theta);

// Limiting optimal weights (A+R)^{-1} V for the given moments.
Eigen::VectorXd limiting_weights(const AsymptoticMoments& mom);

// Limiting optimal risk sigma2*alpha2 - V'(A+R)^{-1}V.
double limiting_risk(const AsymptoticMoments& mom, const SignalNoise& theta);

// Equal-split combination rule: k shards, common lambda, scalar weight.
// m and mprime are the Stieltjes transform of the shard spectrum and its
// z-derivative at -lambda (estimated by trace functionals in the protocol).
struct EqualSplitPlan {
    double weight;  // applied to every local estimator
    double risk;    // limiting MSE of the combined estimator
};

EqualSplitPlan equal_split_weights_risk(int k, double gamma, double lambda,
                                        const SignalNoise& theta, double m,
                                        double mprime);

// Single-machine limiting risk M_1(gamma, lambda), identity covariance,
// arbitrary lambda.
double isotropic_machine_risk(double gamma, double lambda,
                              const SignalNoise& theta);

// Distributed limiting risk M_k for arbitrary per-shard (gamma_i, lambda_i),
// identity covariance, through the decoupled form
//   M_k = sigma2*alpha2 / (1 + sum_i V_i^2 / D_i).
double isotropic_distributed_risk(std::span<const double> gammas,
                                  std::span<const double> lambdas,
                                  const SignalNoise& theta);

// phi(gamma) = gamma * m_gamma(-gamma/alpha2); increasing from 0 to alpha2.
double optimal_risk_phi(double gamma, double alpha2);

// Asymptotic relative efficiency psi(k, gamma, alpha2) = M_1 / M_k for k
// equal shards at optimal tuning; decreasing in k from 1 to h(alpha2, gamma).
// k may be fractional (the function extends continuously).
double are_equal_split(double k, double gamma, double alpha2);

// Infinite-worker limit h(alpha2, gamma) = lim_{k->inf} psi.
double infinite_worker_limit_h(double alpha2, double gamma);

// Optimal per-shard weight W(k, gamma, alpha2) = alpha2 / (alpha2*k - (k-1) *
// phi(k*gamma, alpha2)); in [1/k, 1], with k*W > 1 for k >= 2.
double optimal_weight_equal_split(double k, double gamma, double alpha2);

// Out-of-sample (prediction) efficiency. O_k = sigma2 + M_k at optimal
// tuning; OE = O_1 / O_k >= psi.
struct PredictionEfficiency {
    double oe;
    double o_k;
};

PredictionEfficiency out_of_sample_efficiency(double k, double gamma,
                                              double alpha2, double sigma2);

// Infinite-worker limit of the prediction efficiency,
//   H(alpha2, gamma) = (1 + gamma*m_gamma(-gamma/alpha2)) /
//                      (1 + gamma*alpha2*(1+alpha2)/(alpha2 + gamma*(1+alpha2))).
double prediction_infinite_worker_limit(double alpha2, double gamma);

// Optimally tuned equal-split distributed risk M_k (lambda_i = k*gamma/alpha2).
double optimal_equal_split_risk(double k, double gamma,
                                const SignalNoise& theta);

} // namespace wonder::spectral
