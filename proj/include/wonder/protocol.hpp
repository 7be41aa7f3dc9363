#pragma once

/*
 * protocol.hpp — simulated one-shot distributed ridge (WONDER).
 *
 * Workers are independent tasks over immutable shards. Each worker sends one
 * compact message per candidate penalty: the local ridge estimator (a
 * p-vector) plus a handful of scalars (local theta estimate and trace
 * functionals). The combiner aggregates theta, computes a common combination
 * weight from the equal-split limit formulas, forms
 * beta_dist(lambda) = omega(lambda) * sum_i beta_i(lambda), and selects
 * lambda by validation prediction error.
 *
 * Two variants:
 *   wonder_general    lambda grid around lambda0 = k*p/(n*alpha2_hat) with
 *                     validation selection; requires equal shard sizes.
 *   wonder_isotropic  per-shard lambda_i = gamma_i/alpha2_hat_i, explicit
 *                     weight formula, no validation round; handles unequal
 *                     shards.
 * Baselines: naive average (weights 1/k) and the single-shard estimator.
 *
 * Summaries serialize to self-describing JSON so workers and the combiner
 * can also run as separate processes sharing a directory. Message traffic is
 * instrumented: per worker and grid point, one p-vector and at most eight
 * scalars (the default mean theta aggregation keeps within this budget; the
 * opt-in inverse-variance mode ships two extra Fisher scalars per shard).
 */

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wonder/data.hpp"
#include "wonder/mle.hpp"
#include "wonder/parallel.hpp"
#include "wonder/ridge.hpp"
#include "wonder/spectral.hpp"

namespace wonder::protocol {

using spectral::SignalNoise;

struct Shard {
    ridge::DesignMatrix X;
    Eigen::VectorXd Y;
    int id = 0;
    std::uint64_t seed = 0;
};

enum class PartitionStrategy { contiguous, shuffled };
enum class WeightMethod { general, isotropic, naive, local };

const char* weight_method_name(WeightMethod m);

struct WonderConfig {
    int k = 1;
    PartitionStrategy partition = PartitionStrategy::contiguous;
    std::uint64_t seed = 0;
    // Penalty grid as multipliers of lambda0 = k*p/(n*alpha2_hat) unless an
    // explicit lambda is pinned.
    std::vector<double> lambda_multipliers = default_lambda_multipliers();
    std::optional<double> explicit_lambda;
    double validation_fraction = 0.1; // carved before partitioning
    mle::ThetaAggregation aggregation = mle::ThetaAggregation::mean;
    par::Mode mode = par::Mode::openmp;
    // Approximate alternative to exact global centering: each worker centers
    // its own shard's columns and response. Off by default.
    bool per_shard_center = false;

    static std::vector<double> default_lambda_multipliers() {
        return {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    }

    void validate() const;
};

// The message one worker transmits for one penalty value.
struct ShardSummary {
    int shard_id = 0;
    Eigen::Index n = 0;
    double lambda = 0.0;
    Eigen::VectorXd beta_hat;
    double sigma2_hat = 0.0;
    double alpha2_hat = 0.0;
    double m_hat = 0.0;
    double mprime_hat = 0.0;
    // Present only under inverse-variance aggregation.
    std::optional<mle::FisherInfo> fisher;

    nlohmann::ordered_json to_json() const;
    static ShardSummary from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static ShardSummary load(const std::string& path);
};

// Uplink traffic per worker, in units of p-vectors and scalars.
struct MessageCounter {
    std::vector<std::size_t> vectors;
    std::vector<std::size_t> scalars;

    void resize(std::size_t k) {
        vectors.assign(k, 0);
        scalars.assign(k, 0);
    }
    void record(std::size_t worker, std::size_t nvec, std::size_t nscalar) {
        vectors[worker] += nvec;
        scalars[worker] += nscalar;
    }
};

struct WeightPlan {
    Eigen::VectorXd weights;
    double lambda_star = 0.0;
    SignalNoise theta_hat;
    WeightMethod method = WeightMethod::general;
};

struct GridPoint {
    double lambda = 0.0;
    double weight = 0.0;
    double predicted_risk = 0.0; // equal-split limit formula at the estimates
    double validation_mse = 0.0;
};

struct WonderResult {
    Eigen::VectorXd beta;
    WeightPlan plan;
    double validation_mse = std::numeric_limits<double>::quiet_NaN();
    std::vector<GridPoint> grid;
    MessageCounter messages;
    int grid_points = 0;
};

// Split a dataset into k shards (sizes differ by at most one row).
std::vector<Shard> partition(const data::Dataset& ds, const WonderConfig& config);

// Full local computation for one shard and penalty: ridge fit, theta MLE,
// trace functionals. Pure; identical inputs give identical summaries.
ShardSummary local_worker(const Shard& shard, double lambda);

WonderResult wonder_general(const std::vector<Shard>& shards,
                            const WonderConfig& config,
                            const data::Dataset* validation);

WonderResult wonder_isotropic(const std::vector<Shard>& shards,
                              const WonderConfig& config);

struct BaselineEstimators {
    WonderResult naive;
    WonderResult local;
};

BaselineEstimators baselines(const std::vector<Shard>& shards,
                             const WonderConfig& config);

// Combiner entry points that consume only transmitted summaries (the
// file-exchange path). grouped[g] holds the k summaries for grid point g.
WonderResult combine_isotropic(const std::vector<ShardSummary>& summaries,
                               mle::ThetaAggregation aggregation);
WonderResult combine_general(const std::vector<std::vector<ShardSummary>>& grouped,
                             mle::ThetaAggregation aggregation,
                             const data::Dataset* validation);

double prediction_mse(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                      const Eigen::VectorXd& beta);

} // namespace wonder::protocol
