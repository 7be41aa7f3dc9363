#include "wonder/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "wonder/rng.hpp"
#include "wonder/spectral.hpp"

namespace wonder::bench {

namespace {

constexpr double kResourceGuard = 1e8; // refuse n*p beyond this without force

void append_num(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

void check_resources(Eigen::Index n, Eigen::Index p, bool force) {
    if (!force && static_cast<double>(n) * static_cast<double>(p) > kResourceGuard) {
        std::ostringstream os;
        os << "resource guard: n*p = " << static_cast<double>(n) * static_cast<double>(p)
           << " exceeds " << kResourceGuard << " (pass --force to override)";
        throw std::runtime_error(os.str());
    }
}

} // namespace

// ---------------------------------------------------------------- theory --

std::vector<TheoryPoint> theory_table(const TheoryConfig& cfg) {
    if (cfg.gammas.empty() || cfg.alpha2s.empty() || cfg.ks.empty())
        throw std::invalid_argument("theory_table: empty parameter range");
    std::vector<TheoryPoint> rows;
    rows.reserve(cfg.gammas.size() * cfg.alpha2s.size() * cfg.ks.size());
    for (double g : cfg.gammas)
        for (double a2 : cfg.alpha2s)
            for (double k : cfg.ks) {
                TheoryPoint r;
                r.gamma = g;
                r.alpha2 = a2;
                r.k = k;
                r.phi = spectral::optimal_risk_phi(g, a2);
                r.psi = spectral::are_equal_split(k, g, a2);
                r.h = spectral::infinite_worker_limit_h(a2, g);
                r.weight = spectral::optimal_weight_equal_split(k, g, a2);
                r.oe = spectral::out_of_sample_efficiency(k, g, a2, 1.0).oe;
                r.h_oe = spectral::prediction_infinite_worker_limit(a2, g);
                r.lambda = cfg.lambda_multiplier * k * g / a2;
                const spectral::SignalNoise theta{1.0, a2};
                const double m = spectral::mp_stieltjes_isotropic(k * g, r.lambda);
                const double mp =
                    spectral::mp_stieltjes_derivative_isotropic(k * g, r.lambda);
                r.m_k = spectral::equal_split_weights_risk(
                            static_cast<int>(std::lround(k)), g, r.lambda, theta,
                            m, mp)
                            .risk;
                rows.push_back(r);
            }
    return rows;
}

bool theory_self_check(const std::vector<TheoryPoint>& rows) {
    bool ok = true;
    double prev_gamma = -1.0, prev_h = -1.0, prev_alpha2 = -1.0, prev_k = -1.0;
    for (const TheoryPoint& r : rows) {
        ok = ok && std::abs(spectral::are_equal_split(1.0, r.gamma, r.alpha2) - 1.0) < 1e-8;
        ok = ok && r.weight >= 1.0 / r.k - 1e-12 && r.weight <= 1.0 + 1e-12;
        ok = ok && r.psi > 0.0 && r.psi <= 1.0 + 1e-12;
        ok = ok && r.oe + 1e-12 >= r.psi;
        ok = ok && r.psi + 1e-9 >= r.h;
        // h increases along gamma at fixed (alpha2, k) in row order.
        if (r.alpha2 == prev_alpha2 && r.k == prev_k && r.gamma > prev_gamma)
            ok = ok && r.h >= prev_h - 1e-12;
        prev_gamma = r.gamma;
        prev_h = r.h;
        prev_alpha2 = r.alpha2;
        prev_k = r.k;
    }
    return ok;
}

std::string theory_csv(const std::vector<TheoryPoint>& rows) {
    std::string out = "gamma,alpha2,k,phi,psi,h,weight,oe,h_oe,m_k,lambda\n";
    for (const TheoryPoint& r : rows) {
        const double cols[] = {r.gamma, r.alpha2, r.k,  r.phi, r.psi, r.h,
                               r.weight, r.oe,    r.h_oe, r.m_k, r.lambda};
        for (std::size_t c = 0; c < 11; ++c) {
            if (c) out += ',';
            append_num(out, cols[c]);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------- simulate-efficiency --

std::vector<EfficiencyRow> simulate_efficiency(const EfficiencyConfig& cfg) {
    if (cfg.n < cfg.p) throw std::invalid_argument("simulate_efficiency: need n >= p");
    if (cfg.ks.empty() || cfg.n_seeds < 1)
        throw std::invalid_argument("simulate_efficiency: empty k list or seeds");
    check_resources(cfg.n, cfg.p, cfg.force);
    std::vector<int> ks = cfg.ks;
    std::sort(ks.begin(), ks.end()); // rows emitted sorted by (k, seed)
    for (int k : ks)
        if (k < 1 || static_cast<Eigen::Index>(k) > cfg.n)
            throw std::invalid_argument("simulate_efficiency: invalid k");

    const double gamma = static_cast<double>(cfg.p) / static_cast<double>(cfg.n);
    const std::size_t nk = ks.size();
    std::vector<EfficiencyRow> rows(nk * static_cast<std::size_t>(cfg.n_seeds));

    par::for_index(cfg.n_seeds, cfg.mode, [&](std::ptrdiff_t s) {
        data::SynthSpec spec;
        spec.n = cfg.n;
        spec.p = cfg.p;
        spec.design = data::DesignKind::isotropic;
        spec.alpha2 = cfg.alpha2;
        spec.sigma2 = cfg.sigma2;
        spec.seed = rng::derive(cfg.seed, rng::kTagSeedFan, static_cast<std::uint64_t>(s));
        const data::Dataset ds = data::generate(spec, par::Mode::serial);
        const Eigen::VectorXd& beta = *ds.beta;

        // Oracle tuning: global lambda = gamma/alpha2, shard lambda = k*gamma/alpha2.
        const ridge::DesignMatrix global(ds.X);
        const Eigen::VectorXd beta_glob =
            ridge_fit(global, ds.Y, gamma / cfg.alpha2).coefficients;
        const double err_glob = (beta_glob - beta).squaredNorm();

        for (std::size_t ki = 0; ki < nk; ++ki) {
            const int k = ks[ki];
            protocol::WonderConfig pc;
            pc.k = k;
            pc.seed = spec.seed;
            pc.mode = par::Mode::serial;
            const auto shards = protocol::partition(ds, pc);

            std::vector<const ridge::DesignMatrix*> mats;
            std::vector<double> lambdas;
            for (const auto& sh : shards) {
                mats.push_back(&sh.X);
                lambdas.push_back(static_cast<double>(k) * gamma / cfg.alpha2);
            }
            const auto ow = ridge::finite_sample_weights(mats, beta, cfg.sigma2, lambdas);

            Eigen::VectorXd beta_dist = Eigen::VectorXd::Zero(cfg.p);
            for (std::size_t i = 0; i < shards.size(); ++i)
                beta_dist += ow.w_star(static_cast<Eigen::Index>(i)) *
                             ridge_fit(shards[i].X, shards[i].Y, lambdas[i]).coefficients;
            const double err_dist = (beta_dist - beta).squaredNorm();

            EfficiencyRow row;
            row.k = k;
            row.seed_index = static_cast<int>(s);
            row.realized = k == 1 ? 1.0 : err_glob / err_dist;
            row.psi = spectral::are_equal_split(k, gamma, cfg.alpha2);
            row.weight_sum = ow.w_star.sum();
            rows[ki * static_cast<std::size_t>(cfg.n_seeds) + static_cast<std::size_t>(s)] =
                row;
        }
    });
    return rows;
}

std::vector<EfficiencySummary> summarize_efficiency(const std::vector<EfficiencyRow>& rows) {
    std::vector<EfficiencySummary> out;
    std::vector<int> ks;
    for (const auto& r : rows)
        if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
    for (int k : ks) {
        EfficiencySummary s;
        s.k = k;
        double sum = 0.0, sum2 = 0.0;
        int count = 0, above = 0;
        for (const auto& r : rows) {
            if (r.k != k) continue;
            sum += r.realized;
            sum2 += r.realized * r.realized;
            above += r.weight_sum > 1.0 ? 1 : 0;
            ++count;
            s.psi = r.psi;
        }
        s.mean_realized = sum / count;
        s.sd_realized = count > 1
                            ? std::sqrt(std::max(0.0, (sum2 - sum * sum / count) / (count - 1)))
                            : 0.0;
        s.frac_weight_sum_above_one = static_cast<double>(above) / count;
        out.push_back(s);
    }
    return out;
}

std::string efficiency_csv(const std::vector<EfficiencyRow>& rows,
                           const std::vector<EfficiencySummary>& summary) {
    std::string out =
        "row,k,seed,realized_efficiency,theoretical_psi,weight_sum\n";
    for (const auto& r : rows) {
        out += "sample,";
        append_num(out, r.k);
        out += ',';
        append_num(out, r.seed_index);
        out += ',';
        append_num(out, r.realized);
        out += ',';
        append_num(out, r.psi);
        out += ',';
        append_num(out, r.weight_sum);
        out += '\n';
    }
    for (const auto& s : summary) {
        out += "mean,";
        append_num(out, s.k);
        out += ",-1,";
        append_num(out, s.mean_realized);
        out += ',';
        append_num(out, s.psi);
        out += ',';
        append_num(out, s.frac_weight_sum_above_one);
        out += '\n';
        out += "sd,";
        append_num(out, s.k);
        out += ",-1,";
        append_num(out, s.sd_realized);
        out += ',';
        append_num(out, s.psi);
        out += ",0\n";
    }
    return out;
}

// ----------------------------------------------------------- lambda-sweep --

std::vector<SweepRow> lambda_sweep(const SweepConfig& cfg) {
    if (cfg.ks.empty() || cfg.multipliers.empty() || cfg.n_reps < 1)
        throw std::invalid_argument("lambda_sweep: empty configuration");
    check_resources(cfg.n, cfg.p, cfg.force);

    const double gamma = static_cast<double>(cfg.p) / static_cast<double>(cfg.n);
    std::vector<double> mult = cfg.multipliers;
    std::sort(mult.begin(), mult.end());
    std::vector<int> ks = cfg.ks;
    std::sort(ks.begin(), ks.end());

    const std::size_t nk = ks.size(), nm = mult.size();
    // risk accumulators indexed by (k, multiplier)
    std::vector<double> acc_opt(nk * nm, 0.0), acc_avg(nk * nm, 0.0);

    std::vector<std::vector<double>> rep_opt(
        static_cast<std::size_t>(cfg.n_reps), std::vector<double>(nk * nm, 0.0));
    std::vector<std::vector<double>> rep_avg = rep_opt;

    par::for_index(cfg.n_reps, cfg.mode, [&](std::ptrdiff_t r) {
        data::SynthSpec spec;
        spec.n = cfg.n;
        spec.p = cfg.p;
        spec.design = cfg.design;
        spec.rho = cfg.rho;
        spec.alpha2 = cfg.alpha2;
        spec.sigma2 = cfg.sigma2;
        spec.seed = rng::derive(cfg.seed, rng::kTagSeedFan, static_cast<std::uint64_t>(r));
        const data::Dataset ds = data::generate(spec, par::Mode::serial);
        const Eigen::VectorXd& beta = *ds.beta;
        const double beta2 = beta.squaredNorm();

        for (std::size_t ki = 0; ki < nk; ++ki) {
            const int k = ks[ki];
            protocol::WonderConfig pc;
            pc.k = k;
            pc.seed = spec.seed;
            pc.mode = par::Mode::serial;
            const auto shards = protocol::partition(ds, pc);
            std::vector<const ridge::DesignMatrix*> mats;
            for (const auto& sh : shards) mats.push_back(&sh.X);
            const Eigen::VectorXd unif =
                Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));

            for (std::size_t mi = 0; mi < nm; ++mi) {
                const double lambda = mult[mi] * k * gamma / cfg.alpha2;
                const std::vector<double> lambdas(static_cast<std::size_t>(k), lambda);
                // Exact MSE over the noise for this (X, beta): quadratic forms.
                const auto ow =
                    ridge::finite_sample_weights(mats, beta, cfg.sigma2, lambdas);
                rep_opt[static_cast<std::size_t>(r)][ki * nm + mi] = ow.mse_star;
                rep_avg[static_cast<std::size_t>(r)][ki * nm + mi] =
                    ridge::oracle_mse_of_weights(ow.moments, unif, beta2);
            }
        }
    });

    for (int r = 0; r < cfg.n_reps; ++r)
        for (std::size_t i = 0; i < nk * nm; ++i) {
            acc_opt[i] += rep_opt[static_cast<std::size_t>(r)][i] / cfg.n_reps;
            acc_avg[i] += rep_avg[static_cast<std::size_t>(r)][i] / cfg.n_reps;
        }

    std::vector<SweepRow> rows;
    rows.reserve(nk * nm);
    for (std::size_t ki = 0; ki < nk; ++ki) {
        std::size_t best = 0;
        for (std::size_t mi = 1; mi < nm; ++mi)
            if (acc_opt[ki * nm + mi] < acc_opt[ki * nm + best]) best = mi;
        for (std::size_t mi = 0; mi < nm; ++mi) {
            SweepRow row;
            row.k = ks[ki];
            row.multiplier = mult[mi];
            row.lambda = mult[mi] * ks[ki] * gamma / cfg.alpha2;
            row.risk_opt = acc_opt[ki * nm + mi];
            row.risk_avg = acc_avg[ki * nm + mi];
            row.is_argmin = mi == best;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "k,multiplier,lambda,risk_opt,risk_avg,is_argmin\n";
    for (const auto& r : rows) {
        append_num(out, r.k);
        out += ',';
        append_num(out, r.multiplier);
        out += ',';
        append_num(out, r.lambda);
        out += ',';
        append_num(out, r.risk_opt);
        out += ',';
        append_num(out, r.risk_avg);
        out += ',';
        out += r.is_argmin ? '1' : '0';
        out += '\n';
    }
    return out;
}

// ----------------------------------------------------------------- wonder --

namespace {

nlohmann::ordered_json weights_json(const Eigen::VectorXd& w) {
    return std::vector<double>(w.data(), w.data() + w.size());
}

} // namespace

WonderRun run_wonder(data::Dataset train, data::Dataset test,
                     const WonderRunConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    if (cfg.k < 1) throw std::invalid_argument("run_wonder: k must be >= 1");

    const bool has_test = test.n() > 0;
    data::NormalizeStats stats;
    if (cfg.normalize) {
        stats = data::center_normalize(train, has_test ? &test : nullptr);
    }

    protocol::WonderConfig pc;
    pc.k = cfg.k;
    pc.partition = cfg.partition;
    pc.seed = cfg.seed;
    pc.lambda_multipliers = cfg.lambda_multipliers;
    pc.explicit_lambda = cfg.explicit_lambda;
    pc.validation_fraction = cfg.validation_fraction;
    pc.aggregation = cfg.aggregation;
    pc.mode = cfg.mode;
    pc.per_shard_center = cfg.per_shard_center;
    pc.validate();

    // The validation set is carved before partitioning; workers never see it.
    data::Dataset work = std::move(train);
    data::Dataset validation;
    const std::size_t grid_size =
        cfg.explicit_lambda ? 1 : cfg.lambda_multipliers.size();
    const bool needs_validation =
        cfg.method == protocol::WeightMethod::general && grid_size > 1;
    if (needs_validation) {
        const Eigen::Index n_val = std::max<Eigen::Index>(
            1, static_cast<Eigen::Index>(std::lround(cfg.validation_fraction *
                    static_cast<double>(work.n()))));
        auto split = data::train_test_split(
            work, work.n() - n_val, n_val, rng::derive(cfg.seed, rng::kTagPermute, 2));
        work = std::move(split.first);
        validation = std::move(split.second);
    }

    const auto shards = protocol::partition(work, pc);

    protocol::WonderResult result;
    switch (cfg.method) {
        case protocol::WeightMethod::general:
            result = protocol::wonder_general(shards, pc,
                                              needs_validation ? &validation : nullptr);
            break;
        case protocol::WeightMethod::isotropic:
            result = protocol::wonder_isotropic(shards, pc);
            break;
        case protocol::WeightMethod::naive:
            result = protocol::baselines(shards, pc).naive;
            break;
        case protocol::WeightMethod::local:
            result = protocol::baselines(shards, pc).local;
            break;
    }

    nlohmann::ordered_json report;
    report["version"] = kVersion;
    report["subcommand"] = "wonder";
    nlohmann::ordered_json config;
    config["k"] = cfg.k;
    config["mode"] = protocol::weight_method_name(cfg.method);
    config["seed"] = cfg.seed;
    config["validation_fraction"] = cfg.validation_fraction;
    config["lambda_multipliers"] = cfg.lambda_multipliers;
    if (cfg.explicit_lambda) config["explicit_lambda"] = *cfg.explicit_lambda;
    config["partition"] =
        cfg.partition == protocol::PartitionStrategy::shuffled ? "shuffled" : "contiguous";
    config["aggregation"] =
        cfg.aggregation == mle::ThetaAggregation::inverse_variance ? "inverse_variance"
                                                                   : "mean";
    config["normalize"] = cfg.normalize;
    config["per_shard_center"] = cfg.per_shard_center;
    config["n_train"] = work.n();
    config["n_validation"] = validation.n();
    config["n_test"] = test.n();
    config["p"] = work.p();
    report["config"] = config;
    report["seed"] = cfg.seed;

    const double gamma = static_cast<double>(work.p()) / static_cast<double>(work.n());
    const auto& theta = result.plan.theta_hat;
    nlohmann::ordered_json theory;
    theory["gamma"] = gamma;
    theory["sigma2_hat"] = theta.sigma2;
    theory["alpha2_hat"] = theta.alpha2;
    if (theta.alpha2 > 0.0 && theta.sigma2 > 0.0) {
        theory["m_k"] = spectral::optimal_equal_split_risk(cfg.k, gamma, theta);
        theory["are"] = spectral::are_equal_split(cfg.k, gamma, theta.alpha2);
        theory["oe"] =
            spectral::out_of_sample_efficiency(cfg.k, gamma, theta.alpha2, theta.sigma2).oe;
    }
    report["theory"] = theory;

    nlohmann::ordered_json empirical;
    if (has_test)
        empirical["test_mse"] = protocol::prediction_mse(test.X, test.Y, result.beta);
    if (std::isfinite(result.validation_mse))
        empirical["validation_mse"] = result.validation_mse;
    if (work.beta) {
        // The fit lives in normalized units; map it back before comparing
        // against the generating coefficients.
        Eigen::VectorXd beta_fit = result.beta;
        if (cfg.normalize)
            for (Eigen::Index j = 0; j < beta_fit.size(); ++j)
                beta_fit(j) *= stats.y_scale / stats.x_scale(j);
        empirical["estimation_mse"] = (beta_fit - *work.beta).squaredNorm();
    }
    report["empirical"] = empirical;

    report["lambda"] = result.plan.lambda_star;
    report["weights"] = weights_json(result.plan.weights);
    report["weight_sum"] = result.plan.weights.sum();
    if (!result.grid.empty()) {
        nlohmann::ordered_json grid = nlohmann::ordered_json::array();
        for (const auto& gp : result.grid) {
            nlohmann::ordered_json row;
            row["lambda"] = gp.lambda;
            row["weight"] = gp.weight;
            row["predicted_risk"] = gp.predicted_risk;
            if (std::isfinite(gp.validation_mse)) row["validation_mse"] = gp.validation_mse;
            grid.push_back(row);
        }
        report["lambda_grid"] = grid;
    }
    nlohmann::ordered_json messages;
    std::size_t vec_max = 0, scal_max = 0;
    for (std::size_t i = 0; i < result.messages.vectors.size(); ++i) {
        vec_max = std::max(vec_max, result.messages.vectors[i]);
        scal_max = std::max(scal_max, result.messages.scalars[i]);
    }
    messages["grid_points"] = result.grid_points;
    messages["max_vectors_per_worker"] = vec_max;
    messages["max_scalars_per_worker"] = scal_max;
    report["messages"] = messages;

    if (cfg.timing) {
        const auto elapsed = std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - start);
        report["elapsed_ms"] = elapsed.count();
    }

    WonderRun run;
    run.report = std::move(report);
    run.coefficients = result.beta;
    return run;
}

std::string coefficients_csv(const Eigen::VectorXd& beta) {
    std::string out = "index,coefficient\n";
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        append_num(out, static_cast<double>(j));
        out += ',';
        append_num(out, beta(j));
        out += '\n';
    }
    return out;
}

} // namespace wonder::bench
