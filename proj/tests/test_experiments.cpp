#include <doctest.h>

#include <cmath>
#include <sstream>

#include "wonder/experiments.hpp"

using namespace wonder;

namespace {

data::Dataset synth(Eigen::Index n, Eigen::Index p, std::uint64_t seed,
                    double alpha2 = 1.0) {
    data::SynthSpec spec;
    spec.n = n;
    spec.p = p;
    spec.alpha2 = alpha2;
    spec.seed = seed;
    return data::generate(spec, par::Mode::serial);
}

int count_lines(const std::string& s) {
    int lines = 0;
    for (char c : s) lines += c == '\n';
    return lines;
}

} // namespace

TEST_CASE("theory table passes its own self-check and pins known rows") {
    bench::TheoryConfig cfg;
    cfg.gammas = {0.05, 0.17, 1.0, 5.0};
    cfg.alpha2s = {0.5, 1.0};
    cfg.ks = {1, 2, 10, 100};
    const auto rows = bench::theory_table(cfg);
    CHECK(rows.size() == 4 * 2 * 4);
    CHECK(bench::theory_self_check(rows));
    for (const auto& r : rows) {
        if (r.k == 1) CHECK(std::abs(r.psi - 1.0) < 1e-8);
        CHECK(r.weight >= 1.0 / r.k - 1e-12);
        CHECK(r.weight <= 1.0 + 1e-12);
        // At the optimal multiplier the equal-split risk matches the
        // decoupled optimal form.
        CHECK(std::abs(r.m_k - spectral::optimal_equal_split_risk(
                                   r.k, r.gamma, {1.0, r.alpha2})) < 1e-8);
    }
    const auto csv = bench::theory_csv(rows);
    CHECK(count_lines(csv) == static_cast<int>(rows.size()) + 1);
    CHECK(csv.rfind("gamma,alpha2,k,", 0) == 0);
}

TEST_CASE("efficiency simulation: unit efficiency at k = 1 and sane rows") {
    bench::EfficiencyConfig cfg;
    cfg.n = 400;
    cfg.p = 40;
    cfg.ks = {1, 2};
    cfg.n_seeds = 3;
    cfg.seed = 5;
    cfg.mode = par::Mode::serial;
    const auto rows = bench::simulate_efficiency(cfg);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        if (r.k == 1) CHECK(r.realized == 1.0);
        CHECK(r.realized > 0.0);
        CHECK(r.psi > 0.0);
        CHECK(std::isfinite(r.weight_sum));
    }
    const auto summary = bench::summarize_efficiency(rows);
    REQUIRE(summary.size() == 2);
    CHECK(summary[0].k == 1);
    CHECK(summary[0].mean_realized == 1.0);
    const auto csv = bench::efficiency_csv(rows, summary);
    CHECK(count_lines(csv) == 6 + 4 + 1);
}

TEST_CASE("efficiency simulation: theory is accurate for few machines only") {
    // At n = 1000, p = 100 the asymptotic prediction tracks small k but
    // visibly overstates the efficiency loss once shards get thin.
    bench::EfficiencyConfig cfg;
    cfg.n = 1000;
    cfg.p = 100;
    cfg.ks = {2, 10, 50};
    cfg.n_seeds = 100;
    cfg.seed = 42;
    const auto summary = bench::summarize_efficiency(bench::simulate_efficiency(cfg));
    double gap2 = 0.0, gap10 = 0.0, gap50 = 0.0;
    for (const auto& s : summary) {
        const double gap = std::abs(s.mean_realized - s.psi) / s.psi;
        if (s.k == 2) gap2 = gap;
        if (s.k == 10) gap10 = gap;
        if (s.k == 50) gap50 = gap;
    }
    CHECK(gap2 < 0.05);
    CHECK(gap10 < 0.10);
    CHECK(gap50 > 0.05);      // the visible finite-sample gap
    CHECK(gap50 > 2.0 * gap2); // degradation with the number of machines
}

TEST_CASE("efficiency simulation enforces the resource guard") {
    bench::EfficiencyConfig cfg;
    cfg.n = 20000;
    cfg.p = 20000;
    CHECK_THROWS_WITH_AS(bench::simulate_efficiency(cfg),
                         doctest::Contains("resource guard"), std::runtime_error);
}

TEST_CASE("lambda sweep: isotropic k = 1 minimizes at the unit multiplier") {
    bench::SweepConfig cfg;
    cfg.design = data::DesignKind::isotropic;
    cfg.rho = 0.0;
    cfg.n = 600;
    cfg.p = 100;
    cfg.ks = {1};
    cfg.multipliers = {0.25, 0.5, 1.0, 2.0, 4.0};
    cfg.n_reps = 8;
    cfg.seed = 21;
    cfg.mode = par::Mode::serial;
    const auto rows = bench::lambda_sweep(cfg);
    REQUIRE(rows.size() == 5);
    for (const auto& r : rows) {
        CHECK(r.risk_opt <= r.risk_avg + 1e-12); // k = 1: identical systems
        if (r.is_argmin) CHECK(r.multiplier == 1.0);
    }
    const auto csv = bench::sweep_csv(rows);
    CHECK(csv.rfind("k,multiplier,", 0) == 0);
    CHECK(count_lines(csv) == 6);
}

TEST_CASE("run_wonder: all four modes coincide for a single machine") {
    // Single-point grid and no validation carve leave every mode fitting the
    // same ridge estimator with weight one.
    const auto train = synth(400, 50, 31);
    const auto test = synth(200, 50, 32);

    bench::WonderRunConfig cfg;
    cfg.k = 1;
    cfg.seed = 9;
    cfg.lambda_multipliers = {1.0};
    cfg.validation_fraction = 0.0;
    cfg.mode = par::Mode::serial;

    std::vector<double> mses;
    for (auto method : {protocol::WeightMethod::general, protocol::WeightMethod::isotropic,
                        protocol::WeightMethod::naive, protocol::WeightMethod::local}) {
        cfg.method = method;
        const auto run = bench::run_wonder(train, test, cfg);
        mses.push_back(run.report["empirical"]["test_mse"].get<double>());
    }
    for (std::size_t i = 1; i < mses.size(); ++i)
        CHECK(std::abs(mses[i] - mses[0]) < 1e-10);
}

TEST_CASE("run_wonder reports are byte-deterministic given the seed") {
    const auto train = synth(600, 30, 41);
    const auto test = synth(150, 30, 42);
    bench::WonderRunConfig cfg;
    cfg.k = 3;
    cfg.seed = 12;
    cfg.method = protocol::WeightMethod::general;
    cfg.mode = par::Mode::serial;
    const auto a = bench::run_wonder(train, test, cfg);
    const auto b = bench::run_wonder(train, test, cfg);
    CHECK(a.report.dump(2) == b.report.dump(2));
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.report["config"]["k"].get<int>() == 3);
    CHECK(a.report["version"].get<std::string>() == std::string(bench::kVersion));
    CHECK(!a.report.contains("elapsed_ms"));

    cfg.timing = true;
    const auto timed = bench::run_wonder(train, test, cfg);
    CHECK(timed.report.contains("elapsed_ms"));
}

TEST_CASE("run_wonder: distributed weighting beats the baselines on a wide split") {
    // Shaped like the year-prediction benchmark: many machines, each holding
    // barely more rows than features.
    const auto pool = synth(11000, 91, 51, 1.2);
    auto [train, test] = data::train_test_split(pool, 10000, 1000, 3);

    bench::WonderRunConfig cfg;
    cfg.k = 100;
    cfg.seed = 14;
    cfg.mode = par::Mode::serial;

    const auto run = [&](protocol::WeightMethod m) {
        bench::WonderRunConfig c = cfg;
        c.method = m;
        return bench::run_wonder(train, test, c)
            .report["empirical"]["test_mse"]
            .get<double>();
    };
    const double general = run(protocol::WeightMethod::general);
    const double naive = run(protocol::WeightMethod::naive);
    const double local = run(protocol::WeightMethod::local);
    CHECK(general <= naive);
    CHECK(general <= local);
}

TEST_CASE("run_wonder: estimation error is reported in generating units") {
    // Normalization rescales the fitted coefficients; the reported
    // estimation MSE must still track the limiting risk for the raw model.
    const auto train = synth(3000, 300, 61);
    bench::WonderRunConfig cfg;
    cfg.k = 2;
    cfg.seed = 15;
    cfg.method = protocol::WeightMethod::isotropic;
    cfg.mode = par::Mode::serial;
    const auto run = bench::run_wonder(train, data::Dataset{}, cfg);
    const double est = run.report["empirical"]["estimation_mse"].get<double>();
    const double limit = spectral::optimal_equal_split_risk(2, 0.1, {1.0, 1.0});
    CHECK(std::abs(est - limit) / limit < 0.25);
}

TEST_CASE("coefficient CSV emits one row per feature") {
    Eigen::VectorXd beta(3);
    beta << 0.5, -1.25, 3.0;
    const auto csv = bench::coefficients_csv(beta);
    CHECK(count_lines(csv) == 4);
    CHECK(csv.find("-1.25") != std::string::npos);
}
