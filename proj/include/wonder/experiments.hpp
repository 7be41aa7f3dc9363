#pragma once

/*
 * experiments.hpp — benchmark drivers behind the CLI subcommands.
 *
 * Each driver is a pure function of its config (seeds included), emits rows
 * sorted by (k, seed) and serializes with full-precision decimals, so output
 * files are byte-stable across runs and thread counts. Replication seeds fan
 * out through rng::derive, one independent stream per seed index.
 */

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wonder/data.hpp"
#include "wonder/parallel.hpp"
#include "wonder/protocol.hpp"

namespace wonder::bench {

inline constexpr const char* kVersion = "wonder-0.1.0";

// ---------------------------------------------------------------- theory --

struct TheoryPoint {
    double gamma, alpha2, k;
    double phi, psi, h, weight, oe, h_oe, m_k, lambda;
};

struct TheoryConfig {
    std::vector<double> gammas{1.0};
    std::vector<double> alpha2s{1.0};
    std::vector<double> ks{1.0};
    double lambda_multiplier = 1.0; // of the optimal k*gamma/alpha2
};

std::vector<TheoryPoint> theory_table(const TheoryConfig& cfg);
bool theory_self_check(const std::vector<TheoryPoint>& rows);
std::string theory_csv(const std::vector<TheoryPoint>& rows);

// ---------------------------------------------------- simulate-efficiency --

struct EfficiencyConfig {
    Eigen::Index n = 4000;
    Eigen::Index p = 400;
    double alpha2 = 1.0;
    double sigma2 = 1.0;
    std::vector<int> ks{1, 2, 5, 10};
    int n_seeds = 50;
    std::uint64_t seed = 1;
    par::Mode mode = par::Mode::openmp;
    bool force = false; // lift the n*p resource guard
};

struct EfficiencyRow {
    int k = 0;
    int seed_index = 0;
    double realized = 0.0;  // |beta_glob - beta|^2 / |beta_dist - beta|^2
    double psi = 0.0;       // asymptotic prediction
    double weight_sum = 0.0;
};

struct EfficiencySummary {
    int k = 0;
    double mean_realized = 0.0;
    double sd_realized = 0.0;
    double psi = 0.0;
    double frac_weight_sum_above_one = 0.0;
};

std::vector<EfficiencyRow> simulate_efficiency(const EfficiencyConfig& cfg);
std::vector<EfficiencySummary> summarize_efficiency(const std::vector<EfficiencyRow>& rows);
std::string efficiency_csv(const std::vector<EfficiencyRow>& rows,
                           const std::vector<EfficiencySummary>& summary);

// ----------------------------------------------------------- lambda-sweep --

struct SweepConfig {
    data::DesignKind design = data::DesignKind::ar1;
    double rho = 0.9;
    Eigen::Index n = 3000;
    Eigen::Index p = 500;
    double alpha2 = 1.0;
    double sigma2 = 1.0;
    std::vector<int> ks{1, 2, 5, 10};
    std::vector<double> multipliers = protocol::WonderConfig::default_lambda_multipliers();
    int n_reps = 20;
    std::uint64_t seed = 1;
    par::Mode mode = par::Mode::openmp;
    bool force = false;
};

struct SweepRow {
    int k = 0;
    double multiplier = 0.0;
    double lambda = 0.0;
    double risk_opt = 0.0; // optimally weighted, mean over replications
    double risk_avg = 0.0; // naive average weights 1/k
    bool is_argmin = false;
};

std::vector<SweepRow> lambda_sweep(const SweepConfig& cfg);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// ----------------------------------------------------------------- wonder --

struct WonderRunConfig {
    int k = 1;
    protocol::WeightMethod method = protocol::WeightMethod::general;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;
    std::vector<double> lambda_multipliers =
        protocol::WonderConfig::default_lambda_multipliers();
    std::optional<double> explicit_lambda;
    protocol::PartitionStrategy partition = protocol::PartitionStrategy::contiguous;
    mle::ThetaAggregation aggregation = mle::ThetaAggregation::mean;
    par::Mode mode = par::Mode::openmp;
    bool normalize = true;
    bool per_shard_center = false; // workers center their own shards
    bool timing = false; // include elapsed_ms in the report (breaks byte determinism)
};

struct WonderRun {
    nlohmann::ordered_json report;
    Eigen::VectorXd coefficients;
};

// Fit the chosen estimator on train, evaluate on test when nonempty.
WonderRun run_wonder(data::Dataset train, data::Dataset test,
                     const WonderRunConfig& cfg);

std::string coefficients_csv(const Eigen::VectorXd& beta);

} // namespace wonder::bench
