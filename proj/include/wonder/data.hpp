#pragma once

/*
 * data.hpp — dataset loading, normalization and synthetic generation.
 *
 * Synthetic designs follow the random-effects simulation setup: X rows are
 * i.i.d. N(0, Sigma) with Sigma = I (isotropic) or Sigma_ij = rho^|i-j|
 * (AR-1, generated by the order-1 recursion so the covariance is exact in
 * law), beta_j ~ N(0, sigma2*alpha2/p) and eps_i ~ N(0, sigma2).
 *
 * All randomness derives from one root seed through per-row / per-object
 * streams (rng::derive), so generation is reproducible and can be run with
 * the serial or the OpenMP kernel with bitwise identical output.
 */

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wonder/parallel.hpp"
#include "wonder/spectral.hpp"

namespace wonder::data {

struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd Y;
    std::optional<Eigen::VectorXd> beta;             // synthetic only
    std::optional<spectral::SignalNoise> theta;      // synthetic only

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index p() const { return X.cols(); }
};

enum class DesignKind { isotropic, ar1 };

struct SynthSpec {
    Eigen::Index n = 100;
    Eigen::Index p = 10;
    DesignKind design = DesignKind::isotropic;
    double rho = 0.0;       // AR-1 autocorrelation, |rho| < 1
    double alpha2 = 1.0;
    double sigma2 = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

Dataset generate(const SynthSpec& spec, par::Mode mode = par::Mode::openmp);

// Rectangular numeric CSV. outcome_column < 0 selects the last column.
// Parse failures report 1-based (row, column) locations.
Dataset load_csv(const std::string& path, int outcome_column = -1,
                 bool has_header = true);

// Full-precision decimal output so that a load round-trips bit-exactly.
void write_csv(const Dataset& ds, const std::string& path,
               bool with_header = true);

struct NormalizeStats {
    Eigen::VectorXd x_mean;
    Eigen::VectorXd x_scale;                 // 1 for constant columns
    double y_mean = 0.0;
    double y_scale = 1.0;
    std::vector<Eigen::Index> constant_columns;
};

// Center and scale train columns (and Y) to mean zero, unit sample standard
// deviation; the same train statistics are applied to test when present.
NormalizeStats center_normalize(Dataset& train, Dataset* test = nullptr);

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds,
                                             Eigen::Index n_train,
                                             Eigen::Index n_test,
                                             std::uint64_t seed);

} // namespace wonder::data
