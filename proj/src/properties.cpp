#include "mfc/properties.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

#include "mfc/adjoint.hpp"
#include "mfc/backward.hpp"
#include "mfc/config.hpp"
#include "mfc/forward.hpp"
#include "mfc/measure.hpp"
#include "mfc/portfolio.hpp"
#include "mfc/problem.hpp"
#include "mfc/risk.hpp"
#include "mfc/rng.hpp"

namespace mfc {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void check(std::vector<PropertyResult>& out, const std::string& name, bool passed,
           const std::string& detail) {
    out.push_back({name, passed, detail});
}

void measure_properties(std::vector<PropertyResult>& out) {
    const double root_pi = std::sqrt(std::numbers::pi);
    const double dirac = norm_squared(EmpiricalMeasure::dirac(1.3));
    check(out, "measure.dirac-norm", std::abs(dirac - root_pi) < 1e-10,
          "norm_squared(dirac) = " + fmt(dirac));

    EmpiricalMeasure two;
    two.locations = {0.0, 2.0};
    two.weights = {0.5, 0.5};
    const double atoms = norm_squared(two);
    const double expected = 0.5 * root_pi * (1.0 + std::exp(-1.0));
    check(out, "measure.two-atom-norm", std::abs(atoms - expected) < 1e-10,
          "got " + fmt(atoms) + ", expected " + fmt(expected));

    bool bound_ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 40 && bound_ok; ++trial) {
        EmpiricalMeasure a, b;
        double gap = 0.0;
        for (int i = 0; i < 24; ++i) {
            const double xa = 2.0 * rng::standard_normal(7, trial, i);
            const double xb = xa + rng::standard_normal(9, trial, i);
            a.locations.push_back(xa);
            b.locations.push_back(xb);
            gap += (xa - xb) * (xa - xb);
        }
        a.weights.assign(24, 1.0 / 24);
        b.weights.assign(24, 1.0 / 24);
        const double d2 = distance_squared(a, b);
        const double cap = root_pi * gap / 24 + 1e-12;
        worst = std::max(worst, d2 - cap);
        if (d2 > cap) bound_ok = false;
    }
    check(out, "measure.distance-bound", bound_ok, "worst excess " + fmt(worst));
}

void rng_properties(std::vector<PropertyResult>& out) {
    const double a = rng::standard_normal(42, 11, 29);
    const double b = rng::standard_normal(42, 11, 29);
    const double c = rng::standard_normal(42, 12, 29);
    check(out, "rng.reproducible", a == b && a != c,
          "repeat gap " + fmt(a - b) + ", particle gap " + fmt(a - c));

    const ProblemSpec gbm = make_gbm();
    const TimeGrid grid{1.0, 16};
    const ControlProcess u = ControlProcess::constant(grid, 0.0);
    const ParticleEnsemble small = simulate_ensemble(gbm, u, grid, 64, 42);
    const ParticleEnsemble large = simulate_ensemble(gbm, u, grid, 128, 42);
    bool prefix = true;
    for (int k = 0; k <= grid.steps && prefix; ++k)
        for (int i = 0; i < 64; ++i)
            if (small.state(k, i) != large.state(k, i)) {
                prefix = false;
                break;
            }
    check(out, "forward.particle-count-extension", prefix,
          "first 64 paths identical after growing N to 128");
}

void backward_properties(std::vector<PropertyResult>& out) {
    const ProblemSpec gbm = make_gbm();
    const TimeGrid grid{1.0, 20};
    const ControlProcess u = ControlProcess::constant(grid, 0.0);
    const ParticleEnsemble ens = simulate_ensemble(gbm, u, grid, 2000, 5);

    // Constant terminal with zero driver stays put at every node.
    ProblemSpec flat = gbm;
    flat.g = [](const CoefArgs&) { return 0.0; };
    std::vector<double> constant(2000, 3.25);
    const BackwardSolution sol = solve_backward_with_terminal(flat, ens, u, {}, constant);
    double dev = 0.0;
    for (int k = 0; k <= grid.steps; ++k)
        dev = std::max(dev, std::abs(mean_of(sol.y_row(k)) - 3.25));
    check(out, "backward.constant-terminal", dev < 1e-12, "max deviation " + fmt(dev));

    const BackwardSolution coupled = solve_backward(gbm, ens, u, {});
    const MartingaleReport mart = martingale_residual(gbm, ens, u, coupled);
    check(out, "backward.martingale-residual", mart.max_sigma_ratio < 4.0,
          "worst |mean|/stderr " + fmt(mart.max_sigma_ratio));

    std::vector<double> targets(2000);
    for (int i = 0; i < 2000; ++i)
        targets[static_cast<std::size_t>(i)] = rng::standard_normal(3, i, 0);
    const StepRegression reg(ens.state_row(10), RegressionBasis{});
    const std::vector<double> fitted = reg.fit(targets);
    const double gap = std::abs(mean_of(fitted) - mean_of(targets));
    check(out, "regression.mean-preserved", gap < 1e-12, "mean gap " + fmt(gap));
}

void adjoint_properties(std::vector<PropertyResult>& out) {
    const TimeGrid grid{1.0, 20};
    const ProblemSpec lq = make_lq();
    const ControlProcess u = ControlProcess::constant(grid, -0.3);
    const Pipeline pipe = solve_pipeline(lq, u, grid, 2000, 11, {}, true);

    double lmax = 0.0;
    for (double v : pipe.adjoints.lambda0) lmax = std::max(lmax, std::abs(v));
    check(out, "adjoint.lambda0-vanishes-without-y-cost", lmax < 1e-14,
          "sup |lambda0| = " + fmt(lmax));

    const OptimizerSettings settings{0.2, 40, 1e-3, 20};
    const OptimizationReport report = optimize(lq, ControlProcess::constant(grid, 0.0), grid,
                                               2000, 11, settings, {});
    bool monotone = true;
    for (std::size_t i = 1; i < report.J_history.size(); ++i)
        if (report.J_history[i] > report.J_history[i - 1] + 1e-12) monotone = false;
    check(out, "optimizer.descent", monotone,
          "cost history is nonincreasing over " + fmt(double(report.J_history.size())) +
              " points");
}

void risk_properties(std::vector<PropertyResult>& out) {
    const TimeGrid grid{1.0, 20};
    const ProblemSpec gbm = make_gbm();
    const ControlProcess u = ControlProcess::constant(grid, 0.0);
    const ParticleEnsemble ens = simulate_ensemble(gbm, u, grid, 2000, 17);

    const RiskDriverSpec flat;
    const double resid =
        translation_invariance_check(flat, [](double x) { return x; }, 1.0, ens, grid);
    check(out, "risk.translation-zero-rates", resid < 1e-12, "residual " + fmt(resid));

    RiskDriverSpec mean_rate;
    mean_rate.r_prime = [](double) { return 0.1; };
    const RiskQuote lower = risk(mean_rate, [](double x) { return x; }, ens, grid);
    const RiskQuote upper = risk(mean_rate, [](double x) { return x + 0.5; }, ens, grid);
    check(out, "risk.monotone", upper.phi0 <= lower.phi0 + 3.0 * lower.mc_stderr,
          "phi0 " + fmt(lower.phi0) + " vs dominated " + fmt(upper.phi0));
}

void portfolio_properties(std::vector<PropertyResult>& out) {
    const TimeGrid grid{1.0, 20};
    const PortfolioParams params;
    const ProblemSpec spec = make_portfolio_problem();
    const ControlProcess u = ControlProcess::constant(grid, 0.5);
    const ParticleEnsemble ens = simulate_ensemble(spec, u, grid, 2000, 23);

    const std::vector<double> gamma = girsanov_kernel(params, ens);
    double gmin = std::numeric_limits<double>::infinity();
    const std::size_t last = static_cast<std::size_t>(grid.steps) * 2000;
    double gsum = 0.0;
    for (std::size_t i = 0; i < 2000; ++i) {
        gmin = std::min(gmin, gamma[last + i]);
        gsum += gamma[last + i];
    }
    check(out, "portfolio.kernel-positive", gmin > 0.0, "min Gamma(T) " + fmt(gmin));
    check(out, "portfolio.kernel-martingale", std::abs(gsum / 2000 - 1.0) < 0.05,
          "mean Gamma(T) " + fmt(gsum / 2000));
}

void config_properties(std::vector<PropertyResult>& out) {
    bool rejected = false;
    std::string message;
    try {
        parse_config("command = optimize\nmystery = 1\n");
    } catch (const std::invalid_argument& err) {
        rejected = true;
        message = err.what();
    }
    check(out, "config.unknown-key-line-number",
          rejected && message.find("line 2") != std::string::npos, message);

    rejected = false;
    try {
        parse_config("command = optimize\nseed = 1\nseed = 2\n");
    } catch (const std::invalid_argument& err) {
        rejected = true;
        message = err.what();
    }
    check(out, "config.duplicate-key-line-number",
          rejected && message.find("line 3") != std::string::npos, message);
}

}  // namespace

std::vector<PropertyResult> property_suite() {
    std::vector<PropertyResult> out;
    measure_properties(out);
    rng_properties(out);
    backward_properties(out);
    adjoint_properties(out);
    risk_properties(out);
    portfolio_properties(out);
    config_properties(out);
    return out;
}

}  // namespace mfc
