#include "wonder/ridge.hpp"

#include <cmath>
#include <stdexcept>

namespace wonder::ridge {

DesignMatrix::DesignMatrix(Eigen::MatrixXd X) : X_(std::move(X)) {
    if (X_.rows() < 1 || X_.cols() < 1)
        throw std::invalid_argument("DesignMatrix: need n >= 1 and p >= 1");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    U_ = svd.matrixU();
    V_ = svd.matrixV();
    s_ = svd.singularValues();
}

Eigen::VectorXd DesignMatrix::cov_eigenvalues() const {
    Eigen::VectorXd ell = Eigen::VectorXd::Zero(cols());
    const double n = static_cast<double>(rows());
    for (Eigen::Index j = 0; j < s_.size(); ++j) ell(j) = s_(j) * s_(j) / n;
    return ell;
}

RidgeFit ridge_fit(const DesignMatrix& X, const Eigen::VectorXd& Y, double lambda) {
    if (Y.size() != X.rows())
        throw std::invalid_argument("ridge_fit: response length does not match rows");
    if (!(lambda > 0.0)) throw std::domain_error("ridge_fit: lambda must be > 0");

    const double n = static_cast<double>(X.rows());
    const Eigen::VectorXd uty = X.left_vectors().transpose() * Y;
    const Eigen::VectorXd& s = X.singular_values();
    Eigen::VectorXd scaled(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j)
        scaled(j) = s(j) / (s(j) * s(j) + n * lambda) * uty(j);

    RidgeFit fit;
    fit.coefficients = X.right_vectors() * scaled;
    fit.lambda = lambda;
    fit.n = X.rows();
    return fit;
}

TraceFunctionals trace_functionals(const DesignMatrix& X, double lambda) {
    if (!(lambda > 0.0)) throw std::domain_error("trace_functionals: lambda must be > 0");
    const double n = static_cast<double>(X.rows());
    const double p = static_cast<double>(X.cols());
    const Eigen::VectorXd& s = X.singular_values();

    double m = 0.0, mp = 0.0;
    for (Eigen::Index j = 0; j < s.size(); ++j) {
        const double d = s(j) * s(j) / n + lambda;
        m += 1.0 / d;
        mp += 1.0 / (d * d);
    }
    // Zero eigenvalues when rank < p.
    const double zeros = p - static_cast<double>(s.size());
    m += zeros / lambda;
    mp += zeros / (lambda * lambda);
    return {m / p, mp / p};
}

namespace {

// Q_i beta through the cached SVD: V diag(l/(l+lambda)) V' beta, where
// l = s^2/n. Null-space components of beta map to zero.
Eigen::VectorXd q_times(const DesignMatrix& X, const Eigen::VectorXd& beta,
                        double lambda) {
    const double n = static_cast<double>(X.rows());
    Eigen::VectorXd vtb = X.right_vectors().transpose() * beta;
    for (Eigen::Index j = 0; j < vtb.size(); ++j) {
        const double l = X.singular_values()(j) * X.singular_values()(j) / n;
        vtb(j) *= l / (l + lambda);
    }
    return X.right_vectors() * vtb;
}

} // namespace

FiniteSampleMoments finite_sample_moments(
    const std::vector<const DesignMatrix*>& shards, const Eigen::VectorXd& beta,
    double sigma2, const std::vector<double>& lambdas) {
    const std::size_t k = shards.size();
    if (k == 0 || lambdas.size() != k)
        throw std::invalid_argument("finite_sample_moments: shards/lambdas size mismatch");
    if (!(sigma2 >= 0.0))
        throw std::domain_error("finite_sample_moments: sigma2 must be >= 0");

    Eigen::MatrixXd B(beta.size(), static_cast<Eigen::Index>(k));
    FiniteSampleMoments mom;
    mom.v.resize(static_cast<Eigen::Index>(k));
    mom.R.resize(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        const DesignMatrix& X = *shards[i];
        if (X.cols() != beta.size())
            throw std::invalid_argument("finite_sample_moments: beta dimension mismatch");
        if (!(lambdas[i] > 0.0))
            throw std::domain_error("finite_sample_moments: lambda must be > 0");
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        B.col(ii) = q_times(X, beta, lambdas[i]);
        mom.v(ii) = beta.dot(B.col(ii));

        const double n = static_cast<double>(X.rows());
        double tr = 0.0;
        for (Eigen::Index j = 0; j < X.singular_values().size(); ++j) {
            const double l = X.singular_values()(j) * X.singular_values()(j) / n;
            tr += l / ((l + lambdas[i]) * (l + lambdas[i]));
        }
        mom.R(ii) = sigma2 / n * tr;
    }
    mom.A = B.transpose() * B;
    return mom;
}

OracleWeights finite_sample_weights(const std::vector<const DesignMatrix*>& shards,
                                    const Eigen::VectorXd& beta, double sigma2,
                                    const std::vector<double>& lambdas) {
    OracleWeights out;
    out.moments = finite_sample_moments(shards, beta, sigma2, lambdas);

    Eigen::MatrixXd S = out.moments.A;
    S.diagonal() += out.moments.R;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
    if (!lu.isInvertible())
        throw std::runtime_error(
            "finite_sample_weights: A + R is singular; optimal weights are not unique");
    out.w_star = lu.solve(out.moments.v);
    out.mse_star = beta.squaredNorm() - out.moments.v.dot(out.w_star);
    return out;
}

double oracle_mse_of_weights(const FiniteSampleMoments& mom,
                             const Eigen::VectorXd& w, double beta_norm2) {
    if (w.size() != mom.v.size())
        throw std::invalid_argument("oracle_mse_of_weights: weight dimension mismatch");
    double quad = w.dot(mom.A * w);
    quad += mom.R.dot(w.cwiseProduct(w));
    return quad - 2.0 * mom.v.dot(w) + beta_norm2;
}

} // namespace wonder::ridge
