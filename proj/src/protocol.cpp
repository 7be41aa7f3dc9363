#include "wonder/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wonder/rng.hpp"

namespace wonder::protocol {

const char* weight_method_name(WeightMethod m) {
    switch (m) {
        case WeightMethod::general: return "general";
        case WeightMethod::isotropic: return "isotropic";
        case WeightMethod::naive: return "naive";
        case WeightMethod::local: return "local";
    }
    return "unknown";
}

void WonderConfig::validate() const {
    if (k < 1) throw std::invalid_argument("WonderConfig: k must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5))
        throw std::invalid_argument("WonderConfig: validation_fraction must be in [0, 0.5]");
    if (!explicit_lambda && lambda_multipliers.empty())
        throw std::invalid_argument("WonderConfig: empty lambda grid");
    for (double m : lambda_multipliers)
        if (!(m > 0.0))
            throw std::invalid_argument("WonderConfig: multipliers must be > 0");
}

nlohmann::ordered_json ShardSummary::to_json() const {
    nlohmann::ordered_json j;
    j["shard_id"] = shard_id;
    j["n_i"] = n;
    j["lambda"] = lambda;
    j["beta_hat"] = std::vector<double>(beta_hat.data(), beta_hat.data() + beta_hat.size());
    j["sigma2_hat"] = sigma2_hat;
    j["alpha2_hat"] = alpha2_hat;
    j["m_hat"] = m_hat;
    j["mprime_hat"] = mprime_hat;
    if (fisher) {
        j["fisher_i2"] = fisher->i2;
        j["fisher_i4"] = fisher->i4;
    }
    return j;
}

ShardSummary ShardSummary::from_json(const nlohmann::json& j) {
    ShardSummary s;
    s.shard_id = j.at("shard_id").get<int>();
    s.n = j.at("n_i").get<Eigen::Index>();
    s.lambda = j.at("lambda").get<double>();
    const auto beta = j.at("beta_hat").get<std::vector<double>>();
    s.beta_hat = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                   static_cast<Eigen::Index>(beta.size()));
    s.sigma2_hat = j.at("sigma2_hat").get<double>();
    s.alpha2_hat = j.at("alpha2_hat").get<double>();
    s.m_hat = j.at("m_hat").get<double>();
    s.mprime_hat = j.at("mprime_hat").get<double>();
    if (j.contains("fisher_i2")) {
        mle::FisherInfo info;
        info.i2 = j.at("fisher_i2").get<double>();
        info.i4 = j.at("fisher_i4").get<double>();
        s.fisher = info;
    }
    return s;
}

void ShardSummary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("ShardSummary::save: cannot open '" + path + "'");
    out << to_json().dump(2) << '\n';
}

ShardSummary ShardSummary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ShardSummary::load: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

std::vector<Shard> partition(const data::Dataset& ds, const WonderConfig& config) {
    config.validate();
    const Eigen::Index n = ds.n();
    const int k = config.k;
    if (static_cast<Eigen::Index>(k) > n)
        throw std::invalid_argument("partition: more shards than rows");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (config.partition == PartitionStrategy::shuffled) {
        rng::Stream st(rng::derive(config.seed, rng::kTagPermute, 1));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[st.uniform_below(i)]);
    }

    // Sizes differ by at most one: the first (n mod k) shards get the extra row.
    const Eigen::Index base = n / k;
    const Eigen::Index extra = n % k;
    std::vector<Eigen::Index> offsets(static_cast<std::size_t>(k) + 1, 0);
    for (int i = 0; i < k; ++i)
        offsets[static_cast<std::size_t>(i) + 1] =
            offsets[static_cast<std::size_t>(i)] + base + (i < extra ? 1 : 0);

    std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(k));
    std::vector<Eigen::VectorXd> ys(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const Eigen::Index lo = offsets[static_cast<std::size_t>(i)];
        const Eigen::Index rows = offsets[static_cast<std::size_t>(i) + 1] - lo;
        Eigen::MatrixXd X(rows, ds.p());
        Eigen::VectorXd Y(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            X.row(r) = ds.X.row(order[static_cast<std::size_t>(lo + r)]);
            Y(r) = ds.Y(order[static_cast<std::size_t>(lo + r)]);
        }
        if (config.per_shard_center) {
            X.rowwise() -= X.colwise().mean().eval();
            Y.array() -= Y.mean();
        }
        xs[static_cast<std::size_t>(i)] = std::move(X);
        ys[static_cast<std::size_t>(i)] = std::move(Y);
    }

    // Factorizations are the expensive part; run them in parallel.
    std::vector<std::optional<ridge::DesignMatrix>> mats(static_cast<std::size_t>(k));
    par::for_index(k, config.mode, [&](std::ptrdiff_t i) {
        mats[static_cast<std::size_t>(i)].emplace(std::move(xs[static_cast<std::size_t>(i)]));
    });

    std::vector<Shard> shards;
    shards.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        shards.push_back(Shard{std::move(*mats[static_cast<std::size_t>(i)]),
                               std::move(ys[static_cast<std::size_t>(i)]), i,
                               rng::derive(config.seed, rng::kTagSeedFan,
                                           static_cast<std::uint64_t>(i))});
    return shards;
}

namespace {

ShardSummary make_summary(const Shard& shard, double lambda,
                          const mle::ThetaEstimate& theta,
                          const std::optional<mle::FisherInfo>& fisher) {
    ShardSummary s;
    s.shard_id = shard.id;
    s.n = shard.X.rows();
    s.lambda = lambda;
    s.beta_hat = ridge_fit(shard.X, shard.Y, lambda).coefficients;
    const auto tf = ridge::trace_functionals(shard.X, lambda);
    s.m_hat = tf.m_hat;
    s.mprime_hat = tf.mprime_hat;
    s.sigma2_hat = theta.sigma2_hat;
    s.alpha2_hat = theta.alpha2_hat;
    s.fisher = fisher;
    return s;
}

mle::ThetaEstimate shard_theta(const Shard& shard) {
    return mle::fit_mle(mle::GramSpectrum(shard.X, shard.Y));
}

// Per-shard MLEs in parallel; Fisher entries only when inverse-variance
// aggregation asks for them.
void fit_all_thetas(const std::vector<Shard>& shards, const WonderConfig& config,
                    std::vector<mle::ThetaEstimate>& thetas,
                    std::vector<mle::FisherInfo>& infos) {
    const std::size_t k = shards.size();
    thetas.resize(k);
    infos.resize(k);
    const bool want_fisher = config.aggregation == mle::ThetaAggregation::inverse_variance;
    par::for_index(static_cast<std::ptrdiff_t>(k), config.mode, [&](std::ptrdiff_t i) {
        const auto idx = static_cast<std::size_t>(i);
        mle::GramSpectrum spec(shards[idx].X, shards[idx].Y);
        thetas[idx] = mle::fit_mle(spec);
        if (want_fisher)
            infos[idx] = mle::fisher_information(
                spec, SignalNoise{thetas[idx].sigma2_hat, thetas[idx].alpha2_hat});
    });
}

mle::ThetaEstimate aggregate(const std::vector<mle::ThetaEstimate>& thetas,
                             const std::vector<mle::FisherInfo>& infos,
                             mle::ThetaAggregation mode) {
    if (mode == mle::ThetaAggregation::inverse_variance)
        return mle::aggregate_theta(thetas, mode, &infos);
    return mle::aggregate_theta(thetas, mode);
}

std::vector<const ShardSummary*> sorted_by_shard(const std::vector<ShardSummary>& v) {
    std::vector<const ShardSummary*> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(&s);
    std::sort(out.begin(), out.end(), [](const ShardSummary* a, const ShardSummary* b) {
        return a->shard_id < b->shard_id;
    });
    return out;
}

mle::ThetaEstimate theta_from_summaries(const std::vector<const ShardSummary*>& sorted,
                                        mle::ThetaAggregation mode) {
    std::vector<mle::ThetaEstimate> thetas;
    std::vector<mle::FisherInfo> infos;
    thetas.reserve(sorted.size());
    for (const ShardSummary* s : sorted) {
        mle::ThetaEstimate t;
        t.sigma2_hat = s->sigma2_hat;
        t.alpha2_hat = s->alpha2_hat;
        t.converged = true;
        thetas.push_back(t);
        if (mode == mle::ThetaAggregation::inverse_variance) {
            if (!s->fisher)
                throw std::invalid_argument(
                    "combine: inverse-variance aggregation needs Fisher entries in summaries");
            infos.push_back(*s->fisher);
        }
    }
    return aggregate(thetas, infos, mode);
}

} // namespace

ShardSummary local_worker(const Shard& shard, double lambda) {
    if (!(lambda > 0.0)) throw std::domain_error("local_worker: lambda must be > 0");
    return make_summary(shard, lambda, shard_theta(shard), std::nullopt);
}

double prediction_mse(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                      const Eigen::VectorXd& beta) {
    if (X.rows() != Y.size() || X.cols() != beta.size())
        throw std::invalid_argument("prediction_mse: dimension mismatch");
    return (Y - X * beta).squaredNorm() / static_cast<double>(Y.size());
}

WonderResult combine_isotropic(const std::vector<ShardSummary>& summaries,
                               mle::ThetaAggregation aggregation) {
    if (summaries.empty())
        throw std::invalid_argument("combine_isotropic: no summaries");
    const auto sorted = sorted_by_shard(summaries);
    const Eigen::Index p = sorted.front()->beta_hat.size();
    const int k = static_cast<int>(sorted.size());

    const mle::ThetaEstimate theta = theta_from_summaries(sorted, aggregation);
    if (!(theta.alpha2_hat > 0.0))
        throw std::runtime_error(
            "combine_isotropic: estimated alpha2 is zero; weights are undefined "
            "(use the null estimator beta = 0)");

    // omega_i = (a2/phi(gamma_i)) / (1 + sum_j [a2/phi(gamma_j) - 1])
    Eigen::VectorXd ratio(k);
    double denom = 1.0;
    for (int i = 0; i < k; ++i) {
        const double gamma_i = static_cast<double>(p) /
                               static_cast<double>(sorted[static_cast<std::size_t>(i)]->n);
        const double phi = spectral::optimal_risk_phi(gamma_i, theta.alpha2_hat);
        ratio(i) = theta.alpha2_hat / phi;
        denom += ratio(i) - 1.0;
    }

    WonderResult result;
    result.plan.method = WeightMethod::isotropic;
    result.plan.theta_hat = SignalNoise{theta.sigma2_hat, theta.alpha2_hat};
    result.plan.weights = ratio / denom;
    result.plan.lambda_star = sorted.front()->lambda;
    if (result.plan.weights.sum() < 1.0 - 1e-8)
        throw std::runtime_error("combine_isotropic: weight sum below one");

    result.beta = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < k; ++i)
        result.beta += result.plan.weights(i) * sorted[static_cast<std::size_t>(i)]->beta_hat;
    result.grid_points = 1;
    return result;
}

WonderResult combine_general(const std::vector<std::vector<ShardSummary>>& grouped,
                             mle::ThetaAggregation aggregation,
                             const data::Dataset* validation) {
    if (grouped.empty()) throw std::invalid_argument("combine_general: empty grid");
    const bool has_validation = validation != nullptr && validation->n() > 0;
    if (grouped.size() > 1 && !has_validation)
        throw std::invalid_argument(
            "combine_general: a validation set is required to select among multiple lambdas");

    WonderResult result;
    result.plan.method = WeightMethod::general;
    result.grid_points = static_cast<int>(grouped.size());

    int best = -1;
    for (std::size_t g = 0; g < grouped.size(); ++g) {
        const auto sorted = sorted_by_shard(grouped[g]);
        const int k = static_cast<int>(sorted.size());
        const Eigen::Index p = sorted.front()->beta_hat.size();
        const double lambda = sorted.front()->lambda;

        Eigen::Index n_total = 0;
        double m_bar = 0.0, mp_bar = 0.0;
        for (const ShardSummary* s : sorted) {
            if (s->lambda != lambda)
                throw std::invalid_argument("combine_general: mixed lambdas in one group");
            n_total += s->n;
            m_bar += s->m_hat / k;
            mp_bar += s->mprime_hat / k;
        }
        const mle::ThetaEstimate theta = theta_from_summaries(sorted, aggregation);
        const SignalNoise sn{theta.sigma2_hat, theta.alpha2_hat};
        const double gamma = static_cast<double>(p) / static_cast<double>(n_total);

        const auto plan = spectral::equal_split_weights_risk(k, gamma, lambda, sn,
                                                             m_bar, mp_bar);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
        for (const ShardSummary* s : sorted) beta += s->beta_hat;
        beta *= plan.weight;

        GridPoint point;
        point.lambda = lambda;
        point.weight = plan.weight;
        point.predicted_risk = plan.risk;
        point.validation_mse = has_validation
                                   ? prediction_mse(validation->X, validation->Y, beta)
                                   : std::numeric_limits<double>::quiet_NaN();
        result.grid.push_back(point);

        // Ties break toward the smaller lambda (groups arrive sorted).
        const bool better =
            best < 0 ||
            (has_validation &&
             point.validation_mse < result.grid[static_cast<std::size_t>(best)].validation_mse);
        if (better) {
            best = static_cast<int>(g);
            result.beta = std::move(beta);
            result.plan.weights = Eigen::VectorXd::Constant(k, plan.weight);
            result.plan.lambda_star = lambda;
            result.plan.theta_hat = sn;
            result.validation_mse = point.validation_mse;
        }
    }
    return result;
}

WonderResult wonder_general(const std::vector<Shard>& shards,
                            const WonderConfig& config,
                            const data::Dataset* validation) {
    config.validate();
    if (shards.empty()) throw std::invalid_argument("wonder_general: no shards");
    const std::size_t k = shards.size();
    const Eigen::Index p = shards.front().X.cols();

    Eigen::Index n_min = shards.front().X.rows(), n_max = n_min, n_total = 0;
    for (const Shard& s : shards) {
        n_min = std::min(n_min, s.X.rows());
        n_max = std::max(n_max, s.X.rows());
        n_total += s.X.rows();
    }
    if (n_max - n_min > 1)
        throw std::invalid_argument(
            "wonder_general: shards must have equal sizes (within one row); "
            "use wonder_isotropic for unequal splits");

    std::vector<mle::ThetaEstimate> thetas;
    std::vector<mle::FisherInfo> infos;
    fit_all_thetas(shards, config, thetas, infos);

    MessageCounter counter;
    counter.resize(k);
    const std::size_t theta_scalars =
        config.aggregation == mle::ThetaAggregation::inverse_variance ? 4 : 2;

    std::vector<double> grid;
    if (config.explicit_lambda) {
        grid = {*config.explicit_lambda};
    } else {
        // Round one: workers report theta_hat_i; the combiner centers the grid
        // at lambda0 = k*p/(n*alpha2_hat) and broadcasts it back.
        for (std::size_t i = 0; i < k; ++i) counter.record(i, 0, theta_scalars);
        const mle::ThetaEstimate theta0 = aggregate(thetas, infos, config.aggregation);
        if (!(theta0.alpha2_hat > 0.0))
            throw std::runtime_error(
                "wonder_general: estimated alpha2 is zero; lambda grid is undefined "
                "(use the null estimator beta = 0)");
        const double lambda0 = static_cast<double>(k) * static_cast<double>(p) /
                               (static_cast<double>(n_total) * theta0.alpha2_hat);
        for (double mult : config.lambda_multipliers) grid.push_back(mult * lambda0);
        std::sort(grid.begin(), grid.end());
    }

    const bool has_validation = validation != nullptr && validation->n() > 0;
    if (grid.size() > 1 && !has_validation)
        throw std::invalid_argument(
            "wonder_general: a validation set is required to select among multiple lambdas");

    const bool want_fisher = config.aggregation == mle::ThetaAggregation::inverse_variance;
    std::vector<std::vector<ShardSummary>> grouped(grid.size());
    for (auto& g : grouped) g.resize(k);
    par::for_index(static_cast<std::ptrdiff_t>(grid.size() * k), config.mode,
                   [&](std::ptrdiff_t idx) {
                       const std::size_t g = static_cast<std::size_t>(idx) / k;
                       const std::size_t i = static_cast<std::size_t>(idx) % k;
                       grouped[g][i] = make_summary(
                           shards[i], grid[g], thetas[i],
                           want_fisher ? std::optional<mle::FisherInfo>(infos[i])
                                       : std::nullopt);
                   });
    for (std::size_t g = 0; g < grid.size(); ++g)
        for (std::size_t i = 0; i < k; ++i)
            counter.record(i, 1, 7 + (want_fisher ? 2 : 0));

    WonderResult result = combine_general(grouped, config.aggregation, validation);
    result.messages = std::move(counter);
    return result;
}

WonderResult wonder_isotropic(const std::vector<Shard>& shards,
                              const WonderConfig& config) {
    config.validate();
    if (shards.empty()) throw std::invalid_argument("wonder_isotropic: no shards");
    const std::size_t k = shards.size();
    const Eigen::Index p = shards.front().X.cols();

    std::vector<mle::ThetaEstimate> thetas;
    std::vector<mle::FisherInfo> infos;
    fit_all_thetas(shards, config, thetas, infos);

    const bool want_fisher = config.aggregation == mle::ThetaAggregation::inverse_variance;
    std::vector<ShardSummary> summaries(k);
    par::for_index(static_cast<std::ptrdiff_t>(k), config.mode, [&](std::ptrdiff_t i) {
        const auto idx = static_cast<std::size_t>(i);
        const double gamma_i = static_cast<double>(p) /
                               static_cast<double>(shards[idx].X.rows());
        // Local rule lambda_i = gamma_i / alpha2_hat_i; a floor keeps the
        // penalty finite when a shard estimates zero signal.
        const double lambda_i = gamma_i / std::max(thetas[idx].alpha2_hat, 1e-8);
        summaries[idx] = make_summary(shards[idx], lambda_i, thetas[idx],
                                      want_fisher ? std::optional<mle::FisherInfo>(infos[idx])
                                                  : std::nullopt);
    });

    MessageCounter counter;
    counter.resize(k);
    for (std::size_t i = 0; i < k; ++i)
        counter.record(i, 1, 7 + (want_fisher ? 2 : 0));

    WonderResult result = combine_isotropic(summaries, config.aggregation);
    result.messages = std::move(counter);
    return result;
}

BaselineEstimators baselines(const std::vector<Shard>& shards,
                             const WonderConfig& config) {
    if (shards.empty()) throw std::invalid_argument("baselines: no shards");
    const std::size_t k = shards.size();
    const Eigen::Index p = shards.front().X.cols();
    Eigen::Index n_total = 0;
    for (const Shard& s : shards) n_total += s.X.rows();

    std::vector<mle::ThetaEstimate> thetas;
    std::vector<mle::FisherInfo> infos;
    fit_all_thetas(shards, config, thetas, infos);
    const mle::ThetaEstimate theta = aggregate(thetas, infos, config.aggregation);
    const double a2 = std::max(theta.alpha2_hat, 1e-8);

    // Naive average: every shard tuned as if it held all samples.
    const double lambda_naive =
        static_cast<double>(p) / (static_cast<double>(n_total) * a2);
    // Single-shard baseline: locally optimal tuning on a 1/k fraction.
    const double lambda_local = static_cast<double>(k) * lambda_naive;

    BaselineEstimators out;
    out.naive.plan.method = WeightMethod::naive;
    out.naive.plan.lambda_star = lambda_naive;
    out.naive.plan.theta_hat = SignalNoise{theta.sigma2_hat, theta.alpha2_hat};
    out.naive.plan.weights =
        Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k),
                                  1.0 / static_cast<double>(k));
    out.naive.grid_points = 1;

    std::vector<Eigen::VectorXd> fits(k);
    par::for_index(static_cast<std::ptrdiff_t>(k), config.mode, [&](std::ptrdiff_t i) {
        const auto idx = static_cast<std::size_t>(i);
        fits[idx] = ridge_fit(shards[idx].X, shards[idx].Y, lambda_naive).coefficients;
    });
    out.naive.beta = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < k; ++i) out.naive.beta += fits[i];
    out.naive.beta /= static_cast<double>(k);
    out.naive.messages.resize(k);
    for (std::size_t i = 0; i < k; ++i) out.naive.messages.record(i, 1, 7);

    out.local.plan.method = WeightMethod::local;
    out.local.plan.lambda_star = lambda_local;
    out.local.plan.theta_hat = out.naive.plan.theta_hat;
    out.local.plan.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    out.local.plan.weights(0) = 1.0;
    out.local.beta = ridge_fit(shards.front().X, shards.front().Y, lambda_local).coefficients;
    out.local.grid_points = 1;
    out.local.messages.resize(k);
    out.local.messages.record(0, 1, 7);
    return out;
}

} // namespace wonder::protocol
