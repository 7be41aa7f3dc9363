#include "wonder/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace wonder::spectral {

namespace {

void check_scalar(double value, const char* name) {
    if (!(value >= kScalarMin && value <= kScalarMax)) {
        std::ostringstream os;
        os << name << " = " << value << " outside accepted range [" << kScalarMin
           << ", " << kScalarMax << "]";
        throw std::domain_error(os.str());
    }
}

} // namespace

SpectralDistribution::SpectralDistribution(std::vector<double> atoms_in,
                                           std::vector<double> masses_in)
    : atoms(std::move(atoms_in)), masses(std::move(masses_in)) {
    if (atoms.empty() || atoms.size() != masses.size())
        throw std::invalid_argument("SpectralDistribution: atoms/masses size mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        if (!(atoms[j] >= 0.0))
            throw std::invalid_argument("SpectralDistribution: atoms must be >= 0");
        if (!(masses[j] > 0.0))
            throw std::invalid_argument("SpectralDistribution: masses must be > 0");
        total += masses[j];
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("SpectralDistribution: masses must sum to 1");
}

SpectralDistribution SpectralDistribution::point_mass(double atom) {
    return SpectralDistribution({atom}, {1.0});
}

void SignalNoise::validate() const {
    if (!(sigma2 >= 0.0) || !(alpha2 >= 0.0))
        throw std::domain_error("SignalNoise: sigma2 and alpha2 must be >= 0");
}

AspectRatio::AspectRatio(double gamma_in, std::vector<double> shard_gammas_in)
    : gamma(gamma_in), shard_gammas(std::move(shard_gammas_in)) {
    if (!(gamma > 0.0)) throw std::invalid_argument("AspectRatio: gamma must be > 0");
    for (double g : shard_gammas)
        if (!(g > 0.0))
            throw std::invalid_argument("AspectRatio: shard gamma must be > 0");
}

AspectRatio AspectRatio::equal_split(double gamma, int k) {
    if (k < 1) throw std::invalid_argument("AspectRatio: k must be >= 1");
    return AspectRatio(gamma, std::vector<double>(static_cast<std::size_t>(k),
                                                  gamma * static_cast<double>(k)));
}

double mp_stieltjes_isotropic(double gamma, double lambda) {
    check_scalar(gamma, "gamma");
    check_scalar(lambda, "lambda");
    // m = (u + sqrt(u^2 + 4*lambda*gamma)) / (2*lambda*gamma), u = gamma-1-lambda.
    // For u < 0 the equivalent form 2 / (sqrt(u^2+4lg) - u) avoids cancellation.
    const double u = gamma - 1.0 - lambda;
    const double disc = u * u + 4.0 * lambda * gamma;
    const double root = std::sqrt(disc);
    const double m = (u >= 0.0) ? (u + root) / (2.0 * lambda * gamma)
                                : 2.0 / (root - u);
    if (!(m > 0.0)) throw std::domain_error("mp_stieltjes_isotropic: non-positive result");
    return m;
}

double mp_stieltjes_derivative_isotropic(double gamma, double lambda) {
    check_scalar(gamma, "gamma");
    check_scalar(lambda, "lambda");
    // Differentiating gamma*z*m^2 - (1-gamma-z)*m + 1 = 0 in z at z = -lambda
    // gives m' = (gamma*m^2 + m) / sqrt((gamma-1-lambda)^2 + 4*lambda*gamma).
    const double m = mp_stieltjes_isotropic(gamma, lambda);
    const double u = gamma - 1.0 - lambda;
    const double root = std::sqrt(u * u + 4.0 * lambda * gamma);
    return (gamma * m * m + m) / root;
}

namespace {

// Residual of the companion fixed-point equation; increasing in x.
double companion_residual(const SpectralDistribution& H, double gamma,
                          double lambda, double x) {
    const double e = H.expect([&](double t) { return lambda / (x * t + lambda); });
    return x - 1.0 + gamma * (1.0 - e);
}

} // namespace

double solve_companion_x(const SpectralDistribution& H, double gamma_i,
                         double lambda_i) {
    check_scalar(gamma_i, "gamma");
    check_scalar(lambda_i, "lambda");

    constexpr double kTol = 1e-12;
    constexpr int kMaxIter = 10000;
    int used = 0;

    // Damped fixed-point iteration x <- (x + g(x))/2, g(x) = 1 - gamma*(1 - E).
    double x = 1.0;
    double prev_res = std::abs(companion_residual(H, gamma_i, lambda_i, x));
    int stalled = 0;
    for (; used < 500; ++used) {
        const double e =
            H.expect([&](double t) { return lambda_i / (x * t + lambda_i); });
        double next = 0.5 * (x + (1.0 - gamma_i * (1.0 - e)));
        next = std::clamp(next, 1e-300, 1.0);
        const double res = std::abs(companion_residual(H, gamma_i, lambda_i, next));
        x = next;
        if (res <= kTol) return x;
        if (res >= prev_res) {
            if (++stalled >= 8) break; // oscillation or stagnation: bisect
        } else {
            stalled = 0;
        }
        prev_res = res;
    }

    // Bisection fallback. The residual is increasing with r(0+) < 0 <= r(1),
    // so [lo, 1] brackets the root once r(lo) < 0.
    double lo = 1e-12;
    while (companion_residual(H, gamma_i, lambda_i, lo) > 0.0 && lo > 1e-280)
        lo *= 1e-4;
    double hi = 1.0;
    double mid = x;
    for (; used < kMaxIter; ++used) {
        mid = 0.5 * (lo + hi);
        const double r = companion_residual(H, gamma_i, lambda_i, mid);
        if (std::abs(r) <= kTol) return mid;
        (r < 0.0 ? lo : hi) = mid;
        if (hi - lo <= 1e-17 * hi) break;
    }
    const double res = companion_residual(H, gamma_i, lambda_i, mid);
    if (std::abs(res) <= 1e-10) return mid;
    std::ostringstream os;
    os << "solve_companion_x: no convergence after " << used
       << " iterations, residual = " << res;
    throw std::runtime_error(os.str());
}

AsymptoticMoments asymptotic_moments(const SpectralDistribution& H,
                                     std::span<const double> gammas,
                                     std::span<const double> lambdas,
                                     const SignalNoise& theta) {
    theta.validate();
    if (gammas.empty() || gammas.size() != lambdas.size())
        throw std::invalid_argument("asymptotic_moments: gammas/lambdas size mismatch");
    const Eigen::Index k = static_cast<Eigen::Index>(gammas.size());
    const double sa = theta.sigma2 * theta.alpha2;

    AsymptoticMoments mom;
    mom.V.resize(k);
    mom.A.resize(k, k);
    mom.R.resize(k);
    mom.x.resize(static_cast<std::size_t>(k));

    for (Eigen::Index i = 0; i < k; ++i) {
        const double g = gammas[static_cast<std::size_t>(i)];
        const double l = lambdas[static_cast<std::size_t>(i)];
        const double x = solve_companion_x(H, g, l);
        mom.x[static_cast<std::size_t>(i)] = x;

        const double e1 = H.expect([&](double t) {
            const double d = x * t + l;
            return t / (d * d);
        });
        mom.V(i) = sa * H.expect([&](double t) { return x * t / (x * t + l); });
        // A_ii = sa * [1 - E[(2*l*x*T + l^2)/(x*T+l)^2] + l^2*g*x*e1^2/(1+g*l*e1)]
        const double e2 = H.expect([&](double t) {
            const double d = x * t + l;
            return (2.0 * l * x * t + l * l) / (d * d);
        });
        mom.A(i, i) = sa * (1.0 - e2 + l * l * g * x * e1 * e1 / (1.0 + g * l * e1));
        // The noise trace is normalized by n_i, not p, hence the gamma factor
        // on the p-normalized limit (matches the sample form gamma*(m - l*m')).
        mom.R(i) = theta.sigma2 * g * x * e1 / (1.0 + l * g * e1);
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        const double xi = mom.x[static_cast<std::size_t>(i)];
        const double li = lambdas[static_cast<std::size_t>(i)];
        for (Eigen::Index j = i + 1; j < k; ++j) {
            const double xj = mom.x[static_cast<std::size_t>(j)];
            const double lj = lambdas[static_cast<std::size_t>(j)];
            const double e = H.expect([&](double t) {
                return xi * xj * t * t / ((xi * t + li) * (xj * t + lj));
            });
            mom.A(i, j) = mom.A(j, i) = sa * e;
        }
    }
    return mom;
}

namespace {

Eigen::LDLT<Eigen::MatrixXd> factor_system(const AsymptoticMoments& mom) {
    Eigen::MatrixXd S = mom.A;
    S.diagonal() += mom.R;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    const double scale = S.diagonal().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        !(scale > 0.0) || ldlt.vectorD().minCoeff() <= scale * 1e-14)
        throw std::runtime_error("asymptotic moments: A + R is numerically singular");
    return ldlt;
}

} // namespace

Eigen::VectorXd limiting_weights(const AsymptoticMoments& mom) {
    if (mom.V.cwiseAbs().maxCoeff() == 0.0)
        return Eigen::VectorXd::Zero(mom.V.size());
    return factor_system(mom).solve(mom.V);
}

double limiting_risk(const AsymptoticMoments& mom, const SignalNoise& theta) {
    const double sa = theta.sigma2 * theta.alpha2;
    if (mom.V.cwiseAbs().maxCoeff() == 0.0) return sa;
    const double reduction = mom.V.dot(factor_system(mom).solve(mom.V));
    return sa - reduction;
}

EqualSplitPlan equal_split_weights_risk(int k, double gamma, double lambda,
                                        const SignalNoise& theta, double m,
                                        double mprime) {
    if (k < 1) throw std::invalid_argument("equal_split_weights_risk: k must be >= 1");
    check_scalar(gamma, "gamma");
    check_scalar(lambda, "lambda");
    theta.validate();
    if (!(m > 0.0) || !(mprime > 0.0))
        throw std::domain_error("equal_split_weights_risk: m and mprime must be > 0");

    const double sa = theta.sigma2 * theta.alpha2;
    const double kg = static_cast<double>(k) * gamma;
    const double mm = m - lambda * mprime;
    const double denom = 1.0 - kg + kg * lambda * lambda * mprime;
    if (std::abs(denom) < 1e-14)
        throw std::domain_error(
            "equal_split_weights_risk: vanishing term 1 - k*gamma + "
            "k*gamma*lambda^2*mprime");

    const double cross = kg * lambda * lambda * mm * mm / denom;
    const double F = sa * cross + theta.sigma2 * kg * mm;
    const double G = sa * (1.0 - 2.0 * lambda * m + lambda * lambda * mprime - cross);
    const double total = F + static_cast<double>(k) * G;
    if (!(total > 0.0))
        throw std::domain_error("equal_split_weights_risk: vanishing term F + k*G");

    const double v = sa * (1.0 - lambda * m);
    EqualSplitPlan plan;
    plan.weight = v / total;
    plan.risk = sa - v * v * static_cast<double>(k) / total;
    // Exact transform inputs keep the risk in [0, sigma2*alpha2]; plug-in
    // trace functionals can push it slightly out, which is clamped. Gross
    // violations indicate inconsistent (m, mprime) inputs.
    if (plan.risk < -0.25 * sa || plan.risk > 1.25 * sa)
        throw std::domain_error("equal_split_weights_risk: risk far outside [0, sigma2*alpha2]");
    plan.risk = std::clamp(plan.risk, 0.0, sa);
    return plan;
}

namespace {

// V_i^2 / D_i for one shard at (gamma, lambda); the decoupled risk is
// sigma2*alpha2 / (1 + sum of these).
double isotropic_ratio(double gamma, double lambda, const SignalNoise& theta) {
    const double m = mp_stieltjes_isotropic(gamma, lambda);
    const double mp = mp_stieltjes_derivative_isotropic(gamma, lambda);
    const double sa = theta.sigma2 * theta.alpha2;
    const double V = sa * (1.0 - lambda * m);
    const double A = sa * (1.0 - 2.0 * lambda * m + lambda * lambda * mp);
    const double R = theta.sigma2 * gamma * (m - lambda * mp);
    const double D = sa * (A + R) - V * V;
    if (!(D > 0.0))
        throw std::domain_error("isotropic risk: degenerate denominator D <= 0");
    return V * V / D;
}

} // namespace

double isotropic_machine_risk(double gamma, double lambda,
                              const SignalNoise& theta) {
    theta.validate();
    if (theta.alpha2 == 0.0 || theta.sigma2 == 0.0) return 0.0;
    return theta.sigma2 * theta.alpha2 / (1.0 + isotropic_ratio(gamma, lambda, theta));
}

double isotropic_distributed_risk(std::span<const double> gammas,
                                  std::span<const double> lambdas,
                                  const SignalNoise& theta) {
    theta.validate();
    if (gammas.empty() || gammas.size() != lambdas.size())
        throw std::invalid_argument("isotropic_distributed_risk: size mismatch");
    if (theta.alpha2 == 0.0 || theta.sigma2 == 0.0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < gammas.size(); ++i)
        total += isotropic_ratio(gammas[i], lambdas[i], theta);
    return theta.sigma2 * theta.alpha2 / (1.0 + total);
}

double optimal_risk_phi(double gamma, double alpha2) {
    check_scalar(gamma, "gamma");
    if (!(alpha2 > 0.0)) throw std::domain_error("optimal_risk_phi: alpha2 must be > 0");
    return gamma * mp_stieltjes_isotropic(gamma, gamma / alpha2);
}

double are_equal_split(double k, double gamma, double alpha2) {
    if (!(k >= 1.0)) throw std::domain_error("are_equal_split: k must be >= 1");
    const double phi1 = optimal_risk_phi(gamma, alpha2);
    const double phik = optimal_risk_phi(k * gamma, alpha2);
    return phi1 / alpha2 * (1.0 - k + k * alpha2 / phik);
}

double infinite_worker_limit_h(double alpha2, double gamma) {
    const double phi1 = optimal_risk_phi(gamma, alpha2);
    return phi1 / alpha2 * (1.0 + alpha2 / (gamma * (1.0 + alpha2)));
}

double optimal_weight_equal_split(double k, double gamma, double alpha2) {
    if (!(k >= 1.0)) throw std::domain_error("optimal_weight_equal_split: k must be >= 1");
    const double phik = optimal_risk_phi(k * gamma, alpha2);
    return alpha2 / (alpha2 * k - (k - 1.0) * phik);
}

double optimal_equal_split_risk(double k, double gamma,
                                const SignalNoise& theta) {
    theta.validate();
    if (!(k >= 1.0)) throw std::domain_error("optimal_equal_split_risk: k must be >= 1");
    if (theta.alpha2 == 0.0 || theta.sigma2 == 0.0) return 0.0;
    const double phik = optimal_risk_phi(k * gamma, theta.alpha2);
    return theta.sigma2 * theta.alpha2 /
           (1.0 + k * (theta.alpha2 / phik - 1.0));
}

PredictionEfficiency out_of_sample_efficiency(double k, double gamma,
                                              double alpha2, double sigma2) {
    if (!(sigma2 > 0.0))
        throw std::domain_error("out_of_sample_efficiency: sigma2 must be > 0");
    const SignalNoise theta{sigma2, alpha2};
    const double m1 = sigma2 * optimal_risk_phi(gamma, alpha2);
    const double mk = optimal_equal_split_risk(k, gamma, theta);
    PredictionEfficiency pe;
    pe.o_k = sigma2 + mk;
    pe.oe = (sigma2 + m1) / pe.o_k;
    return pe;
}

double prediction_infinite_worker_limit(double alpha2, double gamma) {
    const double phi1 = optimal_risk_phi(gamma, alpha2);
    const double tail = gamma * alpha2 * (1.0 + alpha2) /
                        (alpha2 + gamma * (1.0 + alpha2));
    return (1.0 + phi1) / (1.0 + tail);
}

} // namespace wonder::spectral
