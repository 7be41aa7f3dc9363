#include "wonder/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace wonder::mle {

namespace {

constexpr double kSigmaLo = 1e-8;
constexpr double kSigmaHi = 1e8;
constexpr double kAlphaHi = 1e8;

} // namespace

void GramSpectrum::init(const Eigen::VectorXd& s, const Eigen::VectorXd& uty,
                        double y2, Eigen::Index n, Eigen::Index p) {
    n_ = n;
    mu_.resize(s.size());
    ysq_.resize(s.size());
    double projected = 0.0;
    for (Eigen::Index j = 0; j < s.size(); ++j) {
        mu_(j) = s(j) * s(j) / static_cast<double>(p);
        ysq_(j) = uty(j) * uty(j);
        projected += ysq_(j);
    }
    y_perp2_ = std::max(0.0, y2 - projected);
}

GramSpectrum::GramSpectrum(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y) {
    if (Y.size() != X.rows())
        throw std::invalid_argument("GramSpectrum: response length mismatch");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
    init(svd.singularValues(), svd.matrixU().transpose() * Y, Y.squaredNorm(),
         X.rows(), X.cols());
}

GramSpectrum::GramSpectrum(const ridge::DesignMatrix& X, const Eigen::VectorXd& Y) {
    if (Y.size() != X.rows())
        throw std::invalid_argument("GramSpectrum: response length mismatch");
    init(X.singular_values(), X.left_vectors().transpose() * Y, Y.squaredNorm(),
         X.rows(), X.cols());
}

double GramSpectrum::loglik(const SignalNoise& theta) const {
    if (!(theta.sigma2 > 0.0))
        throw std::domain_error("gaussian_loglik: sigma2 must be > 0");
    if (!(theta.alpha2 >= 0.0))
        throw std::domain_error("gaussian_loglik: alpha2 must be >= 0");
    const double n = static_cast<double>(n_);
    double logdet = 0.0;
    double quad = y_perp2_;
    for (Eigen::Index j = 0; j < mu_.size(); ++j) {
        const double d = theta.alpha2 * mu_(j) + 1.0;
        logdet += std::log(d);
        quad += ysq_(j) / d;
    }
    return -0.5 * std::log(theta.sigma2) - logdet / (2.0 * n) -
           quad / (2.0 * theta.sigma2 * n);
}

double gaussian_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                       const SignalNoise& theta) {
    return GramSpectrum(X, Y).loglik(theta);
}

namespace {

// Golden-section maximization of f on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, int iters = 40) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < iters; ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return fc > fd ? c : d;
}

} // namespace

ThetaEstimate fit_mle(const GramSpectrum& spectrum) {
    if (spectrum.n() < 2) throw std::invalid_argument("fit_mle: need n >= 2");

    const auto value = [&](double s2, double a2) {
        return spectrum.loglik(SignalNoise{s2, a2});
    };

    // Stage 1: 16 x 16 logarithmic grid; the alpha2 axis carries an extra
    // point at the boundary alpha2 = 0.
    std::vector<double> sgrid(16), agrid;
    for (int i = 0; i < 16; ++i)
        sgrid[static_cast<std::size_t>(i)] =
            kSigmaLo * std::pow(kSigmaHi / kSigmaLo, i / 15.0);
    agrid.push_back(0.0);
    for (int i = 0; i < 15; ++i)
        agrid.push_back(kSigmaLo * std::pow(kAlphaHi / kSigmaLo, i / 14.0));

    double best_s = sgrid[0], best_a = agrid[0];
    double best = -std::numeric_limits<double>::infinity();
    for (double s2 : sgrid)
        for (double a2 : agrid) {
            const double l = value(s2, a2);
            if (l > best) {
                best = l;
                best_s = s2;
                best_a = a2;
            }
        }

    // Stage 2: cyclic per-coordinate golden-section refinement. Brackets
    // start one grid step wide and shrink geometrically; a candidate is
    // accepted only if it does not lower the likelihood, so the result
    // dominates every coarse grid point.
    double span = std::pow(kSigmaHi / kSigmaLo, 1.0 / 15.0);
    for (int cycle = 0; cycle < 40; ++cycle) {
        const double s_cand =
            golden_max([&](double s2) { return value(s2, best_a); },
                       std::max(kSigmaLo, best_s / span),
                       std::min(kSigmaHi, best_s * span));
        if (value(s_cand, best_a) >= best) {
            best_s = s_cand;
            best = value(best_s, best_a);
        }

        const double a_lo = best_a == 0.0 ? 0.0 : best_a / span;
        const double a_hi = best_a == 0.0 ? kSigmaLo
                                          : std::min(kAlphaHi, best_a * span);
        double a_cand = golden_max([&](double a2) { return value(best_s, a2); },
                                   a_lo, a_hi);
        if (a_cand < 1e-12) a_cand = 0.0;
        if (value(best_s, a_cand) >= best) {
            best_a = a_cand;
            best = value(best_s, best_a);
        }
        span = std::max(1.0 + 1e-12, std::pow(span, 0.8));
    }

    ThetaEstimate est;
    est.sigma2_hat = best_s;
    est.alpha2_hat = best_a;
    est.loglik = best;
    est.converged = std::isfinite(est.loglik);
    return est;
}

ThetaEstimate fit_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y) {
    return fit_mle(GramSpectrum(X, Y));
}

FisherInfo fisher_information(const GramSpectrum& spectrum,
                              const SignalNoise& theta) {
    if (!(theta.sigma2 > 0.0))
        throw std::domain_error("fisher_information: sigma2 must be > 0");
    const double n = static_cast<double>(spectrum.n());
    const Eigen::VectorXd& mu = spectrum.gram_eigenvalues();

    double t3 = 0.0, t4 = 0.0;
    for (Eigen::Index j = 0; j < mu.size(); ++j) {
        const double r = mu(j) / (theta.alpha2 * mu(j) + 1.0);
        t3 += r;
        t4 += r * r;
    }
    FisherInfo info;
    const double s2 = theta.sigma2;
    info.i2 = 1.0 / (2.0 * s2 * s2); // trace of the identity cancels n
    info.i3 = t3 / (2.0 * n * s2);
    info.i4 = t4 / (2.0 * n);
    return info;
}

FisherInfo fisher_information(const Eigen::MatrixXd& X, const SignalNoise& theta) {
    return fisher_information(GramSpectrum(X, Eigen::VectorXd::Zero(X.rows())), theta);
}

ThetaEstimate aggregate_theta(const std::vector<ThetaEstimate>& estimates,
                              ThetaAggregation mode,
                              const std::vector<FisherInfo>* infos) {
    if (estimates.empty())
        throw std::invalid_argument("aggregate_theta: empty estimate list");

    ThetaEstimate out;
    out.converged = true;
    const double k = static_cast<double>(estimates.size());

    if (mode == ThetaAggregation::mean) {
        for (const ThetaEstimate& e : estimates) {
            out.sigma2_hat += e.sigma2_hat / k;
            out.alpha2_hat += e.alpha2_hat / k;
            out.loglik += e.loglik / k;
            out.converged = out.converged && e.converged;
        }
        return out;
    }

    if (infos == nullptr || infos->size() != estimates.size())
        throw std::invalid_argument(
            "aggregate_theta: inverse_variance mode needs one FisherInfo per shard");
    double ws = 0.0, wa = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        ws += (*infos)[i].i2;
        wa += (*infos)[i].i4;
    }
    if (!(ws > 0.0) || !(wa > 0.0))
        throw std::domain_error("aggregate_theta: degenerate Fisher weights");
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        out.sigma2_hat += (*infos)[i].i2 / ws * estimates[i].sigma2_hat;
        out.alpha2_hat += (*infos)[i].i4 / wa * estimates[i].alpha2_hat;
        out.loglik += estimates[i].loglik / k;
        out.converged = out.converged && estimates[i].converged;
    }
    return out;
}

} // namespace wonder::mle
