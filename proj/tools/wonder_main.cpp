// Command-line front end: theory curves, simulation studies and WONDER fits,
// emitted as CSV/JSON tables. Every subcommand is deterministic given --seed.
//
//   wonder theory              closed-form risk/efficiency/weight curves
//   wonder simulate-efficiency realized vs theoretical relative efficiency
//   wonder lambda-sweep        distributed risk across a penalty grid
//   wonder wonder              fit a distributed estimator on CSV data
//
// A JSON config (--config) mirrors the flags one-to-one; explicit flags
// override config values.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wonder/experiments.hpp"
#include "wonder/parallel.hpp"

namespace {

using nlohmann::json;

std::vector<double> parse_values(const std::string& text) {
    // Either a comma list "0.1,0.5,2" or a geometric range "lo:hi:count".
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        double lo = 0.0, hi = 0.0;
        int count = 0;
        if (std::sscanf(text.c_str(), "%lf:%lf:%d", &lo, &hi, &count) != 3 ||
            count < 2 || !(lo > 0.0) || !(hi > lo))
            throw CLI::ValidationError("range must be lo:hi:count with 0 < lo < hi");
        for (int i = 0; i < count; ++i)
            out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stod(item));
    if (out.empty()) throw CLI::ValidationError("empty value list");
    return out;
}

std::vector<int> parse_ints(const std::string& text) {
    std::vector<int> out;
    for (double v : parse_values(text)) out.push_back(static_cast<int>(std::lround(v)));
    return out;
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
    out << content;
}

// Prepend config-file values as synthetic argv entries so that real flags,
// parsed later with TakeLast policy, override them.
std::vector<std::string> config_args(const std::string& path, const std::string& sub) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    json cfg;
    in >> cfg;
    std::vector<std::string> args;
    const json* scope = &cfg;
    if (cfg.contains(sub)) scope = &cfg.at(sub);
    for (auto it = scope->begin(); it != scope->end(); ++it) {
        if (it.value().is_object() || it.value().is_array()) continue;
        args.push_back("--" + it.key());
        if (it.value().is_string())
            args.push_back(it.value().get<std::string>());
        else if (it.value().is_boolean()) {
            if (!it.value().get<bool>()) args.pop_back();
        } else {
            std::ostringstream os;
            os << it.value();
            args.push_back(os.str());
        }
    }
    return args;
}

struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 1;
    int threads = 0;
    bool self_check = false;
    bool serial = false;

    wonder::par::Mode mode() const {
        return serial ? wonder::par::Mode::serial : wonder::par::Mode::openmp;
    }
};

void add_common(CLI::App* sub, CommonFlags& flags) {
    sub->add_option("--config", flags.config, "JSON config mirroring the flags");
    sub->add_option("--out", flags.out, "output path (default: stdout)");
    sub->add_option("--seed", flags.seed, "root seed");
    sub->add_option("--threads", flags.threads, "OpenMP thread count (0 = default)");
    sub->add_flag("--self-check", flags.self_check, "run embedded sanity checks");
    sub->add_flag("--serial", flags.serial, "force the serial kernels");
    for (auto* opt : sub->get_options())
        if (opt->get_expected_min() > 0)
            opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"weighted one-shot distributed ridge regression workbench"};
    app.require_subcommand(1);

    // ------------------------------------------------------------- theory --
    auto* theory = app.add_subcommand("theory", "closed-form efficiency curves");
    CommonFlags theory_common;
    std::string t_gamma = "0.05:10:40", t_alpha2 = "1", t_k = "1,2,5,10,100";
    double t_mult = 1.0;
    theory->add_option("--gamma", t_gamma, "gamma list or lo:hi:count range");
    theory->add_option("--alpha2", t_alpha2, "alpha2 list or range");
    theory->add_option("--k", t_k, "machine counts");
    theory->add_option("--lambda-multiplier", t_mult, "penalty as multiple of k*gamma/alpha2");
    add_common(theory, theory_common);

    // ------------------------------------------------- simulate-efficiency --
    auto* sim = app.add_subcommand("simulate-efficiency",
                                   "realized relative efficiency vs theory");
    CommonFlags sim_common;
    long long s_n = 4000, s_p = 400;
    double s_alpha2 = 1.0, s_sigma2 = 1.0;
    std::string s_k = "1,2,5,10";
    int s_seeds = 50;
    bool s_force = false;
    sim->add_option("--n", s_n, "sample size");
    sim->add_option("--p", s_p, "dimension");
    sim->add_option("--alpha2", s_alpha2, "signal-to-noise ratio");
    sim->add_option("--sigma2", s_sigma2, "noise level");
    sim->add_option("--k", s_k, "machine counts");
    sim->add_option("--seeds", s_seeds, "number of replications");
    sim->add_flag("--force", s_force, "lift the n*p resource guard");
    add_common(sim, sim_common);

    // ------------------------------------------------------- lambda-sweep --
    auto* sweep = app.add_subcommand("lambda-sweep",
                                     "distributed risk across a penalty grid");
    CommonFlags sweep_common;
    std::string w_design = "ar1", w_k = "1,2,5,10", w_mult = "0.125,0.25,0.5,1,2,4,8";
    double w_rho = 0.9, w_alpha2 = 1.0, w_sigma2 = 1.0;
    long long w_n = 3000, w_p = 500;
    int w_reps = 20;
    bool w_force = false;
    sweep->add_option("--design", w_design, "isotropic or ar1")
        ->check(CLI::IsMember({"isotropic", "ar1"}));
    sweep->add_option("--rho", w_rho, "AR-1 autocorrelation");
    sweep->add_option("--n", w_n, "sample size");
    sweep->add_option("--p", w_p, "dimension");
    sweep->add_option("--alpha2", w_alpha2, "signal-to-noise ratio");
    sweep->add_option("--sigma2", w_sigma2, "noise level");
    sweep->add_option("--k", w_k, "machine counts");
    sweep->add_option("--multipliers", w_mult, "penalty multipliers of k*gamma/alpha2");
    sweep->add_option("--reps", w_reps, "replications");
    sweep->add_flag("--force", w_force, "lift the n*p resource guard");
    add_common(sweep, sweep_common);

    // ------------------------------------------------------------- wonder --
    auto* fit = app.add_subcommand("wonder", "fit a distributed ridge estimator");
    CommonFlags fit_common;
    std::string f_train, f_test, f_mode = "general", f_partition = "contiguous";
    std::string f_aggregation = "mean", f_mult = "0.125,0.25,0.5,1,2,4,8";
    std::string f_coeff_out;
    int f_k = 1, f_outcome = -1;
    double f_vfrac = 0.1, f_lambda = 0.0;
    bool f_no_header = false, f_no_normalize = false, f_timing = false;
    bool f_per_shard_center = false;
    fit->add_option("--train", f_train, "training CSV")->required();
    fit->add_option("--test", f_test, "test CSV (optional)");
    fit->add_option("--k", f_k, "number of machines");
    fit->add_option("--mode", f_mode, "general | isotropic | naive | local")
        ->check(CLI::IsMember({"general", "isotropic", "naive", "local"}));
    fit->add_option("--outcome-col", f_outcome, "outcome column index (-1 = last)");
    fit->add_flag("--no-header", f_no_header, "CSV files have no header row");
    fit->add_option("--validation-fraction", f_vfrac, "carved before partitioning");
    fit->add_option("--multipliers", f_mult, "lambda grid multipliers");
    fit->add_option("--lambda", f_lambda, "pin a single explicit lambda (> 0)");
    fit->add_option("--partition", f_partition, "contiguous | shuffled")
        ->check(CLI::IsMember({"contiguous", "shuffled"}));
    fit->add_option("--aggregation", f_aggregation, "mean | inverse_variance")
        ->check(CLI::IsMember({"mean", "inverse_variance"}));
    fit->add_option("--coefficients-out", f_coeff_out, "write coefficients CSV here");
    fit->add_flag("--no-normalize", f_no_normalize, "skip center/normalize");
    fit->add_flag("--per-shard-center", f_per_shard_center,
                  "each worker centers its own shard (approximate centering)");
    fit->add_flag("--timing", f_timing, "embed elapsed_ms in the report");
    add_common(fit, fit_common);

    // Two-pass parse: pick up --config first, then re-parse with config values
    // prepended so explicit flags win.
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    CLI::App* active = app.get_subcommands().front();
    CommonFlags* common = theory->parsed() ? &theory_common
                          : sim->parsed()  ? &sim_common
                          : sweep->parsed() ? &sweep_common
                                            : &fit_common;
    if (!common->config.empty()) {
        std::vector<std::string> args;
        args.push_back(argv[0]);
        args.push_back(active->get_name());
        try {
            for (const auto& a : config_args(common->config, active->get_name()))
                args.push_back(a);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
        for (int i = 2; i < argc; ++i) args.push_back(argv[i]);
        std::vector<const char*> cargs;
        for (const auto& a : args) cargs.push_back(a.c_str());
        try {
            app.clear();
            app.parse(static_cast<int>(cargs.size()), cargs.data());
        } catch (const CLI::ParseError& e) {
            return app.exit(e);
        }
    }

    wonder::par::set_threads(common->threads);

    try {
        if (theory->parsed()) {
            wonder::bench::TheoryConfig cfg;
            cfg.gammas = parse_values(t_gamma);
            cfg.alpha2s = parse_values(t_alpha2);
            cfg.ks = parse_values(t_k);
            cfg.lambda_multiplier = t_mult;
            const auto rows = wonder::bench::theory_table(cfg);
            write_output(theory_common.out, wonder::bench::theory_csv(rows));
            if (theory_common.self_check && !wonder::bench::theory_self_check(rows)) {
                std::cerr << "self-check failed\n";
                return 1;
            }
        } else if (sim->parsed()) {
            wonder::bench::EfficiencyConfig cfg;
            cfg.n = s_n;
            cfg.p = s_p;
            cfg.alpha2 = s_alpha2;
            cfg.sigma2 = s_sigma2;
            cfg.ks = parse_ints(s_k);
            cfg.n_seeds = s_seeds;
            cfg.seed = sim_common.seed;
            cfg.mode = sim_common.mode();
            cfg.force = s_force;
            const auto rows = wonder::bench::simulate_efficiency(cfg);
            const auto summary = wonder::bench::summarize_efficiency(rows);
            write_output(sim_common.out, wonder::bench::efficiency_csv(rows, summary));
            if (sim_common.self_check) {
                for (const auto& s : summary)
                    if (s.k == 1 && std::abs(s.mean_realized - 1.0) > 1e-12) {
                        std::cerr << "self-check failed: k=1 efficiency != 1\n";
                        return 1;
                    }
            }
        } else if (sweep->parsed()) {
            wonder::bench::SweepConfig cfg;
            cfg.design = w_design == "ar1" ? wonder::data::DesignKind::ar1
                                           : wonder::data::DesignKind::isotropic;
            cfg.rho = w_rho;
            cfg.n = w_n;
            cfg.p = w_p;
            cfg.alpha2 = w_alpha2;
            cfg.sigma2 = w_sigma2;
            cfg.ks = parse_ints(w_k);
            cfg.multipliers = parse_values(w_mult);
            cfg.n_reps = w_reps;
            cfg.seed = sweep_common.seed;
            cfg.mode = sweep_common.mode();
            cfg.force = w_force;
            const auto rows = wonder::bench::lambda_sweep(cfg);
            write_output(sweep_common.out, wonder::bench::sweep_csv(rows));
            if (sweep_common.self_check) {
                for (const auto& r : rows)
                    if (!(r.risk_opt <= r.risk_avg + 1e-12)) {
                        std::cerr << "self-check failed: optimal weights worse than average\n";
                        return 1;
                    }
            }
        } else if (fit->parsed()) {
            wonder::data::Dataset train =
                wonder::data::load_csv(f_train, f_outcome, !f_no_header);
            wonder::data::Dataset test;
            if (!f_test.empty())
                test = wonder::data::load_csv(f_test, f_outcome, !f_no_header);

            wonder::bench::WonderRunConfig cfg;
            cfg.k = f_k;
            if (f_mode == "general") cfg.method = wonder::protocol::WeightMethod::general;
            else if (f_mode == "isotropic") cfg.method = wonder::protocol::WeightMethod::isotropic;
            else if (f_mode == "naive") cfg.method = wonder::protocol::WeightMethod::naive;
            else cfg.method = wonder::protocol::WeightMethod::local;
            cfg.seed = fit_common.seed;
            cfg.validation_fraction = f_vfrac;
            cfg.lambda_multipliers = parse_values(f_mult);
            if (f_lambda > 0.0) cfg.explicit_lambda = f_lambda;
            cfg.partition = f_partition == "shuffled"
                                ? wonder::protocol::PartitionStrategy::shuffled
                                : wonder::protocol::PartitionStrategy::contiguous;
            cfg.aggregation = f_aggregation == "inverse_variance"
                                  ? wonder::mle::ThetaAggregation::inverse_variance
                                  : wonder::mle::ThetaAggregation::mean;
            cfg.mode = fit_common.mode();
            cfg.normalize = !f_no_normalize;
            cfg.per_shard_center = f_per_shard_center;
            cfg.timing = f_timing;

            auto run = wonder::bench::run_wonder(std::move(train), std::move(test), cfg);
            write_output(fit_common.out, run.report.dump(2) + "\n");
            if (!f_coeff_out.empty())
                write_output(f_coeff_out, wonder::bench::coefficients_csv(run.coefficients));
            if (fit_common.self_check &&
                !run.report["weights"].empty() &&
                !std::isfinite(run.report["weight_sum"].get<double>())) {
                std::cerr << "self-check failed: non-finite weights\n";
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
