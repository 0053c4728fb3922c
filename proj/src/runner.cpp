#include "mfc/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "mfc/adjoint.hpp"
#include "mfc/backward.hpp"
#include "mfc/forward.hpp"
#include "mfc/portfolio.hpp"
#include "mfc/problem.hpp"
#include "mfc/properties.hpp"
#include "mfc/risk.hpp"

namespace mfc {

namespace {

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
}

ProblemSpec build_problem(const RunConfig& config, const std::string& fallback) {
    const std::string name = config.problem.empty() ? fallback : config.problem;
    ProblemSpec spec;
    if (name == "gbm") {
        spec = make_gbm(config.gbm_drift, config.gbm_vol, config.x0);
    } else if (name == "mean-reverting") {
        spec = make_mean_reverting(config.mr_kappa, config.mr_sigma, config.x0);
    } else if (name == "lq") {
        spec = make_lq(config.lq_sigma, config.x0);
    } else if (name == "portfolio") {
        spec = make_portfolio_problem(config.pb_b0, config.pb_sigma0, config.pb_r0, config.x0);
    } else {
        throw std::invalid_argument("unknown problem preset '" + name + "'");
    }
    spec.horizon = config.horizon;
    return spec;
}

double start_control(const ProblemSpec& spec) {
    // Feasible interior starting value: 0 when admissible, else mid-box.
    return spec.control_set.project(0.0) == 0.0 ? 0.0 : 0.5;
}

RegressionBasis basis_of(const RunConfig& config) {
    RegressionBasis basis;
    basis.degree = config.basis_degree;
    basis.ridge = config.ridge;
    return basis;
}

OptimizerSettings optimizer_of(const RunConfig& config) {
    OptimizerSettings settings;
    settings.step0 = config.step0;
    settings.max_iters = config.max_iters;
    settings.tol = config.tol;
    return settings;
}

void write_summary(const std::filesystem::path& dir, const RunConfig& config,
                   const std::string& body) {
    std::ofstream out = open_output(dir, "summary.txt");
    out << "# resolved configuration\n" << render_config(config) << "\n# results\n" << body;
}

int run_simulate_forward(const RunConfig& config, const std::filesystem::path& dir) {
    const ProblemSpec spec = build_problem(config, "gbm");
    const TimeGrid grid{config.horizon, config.steps};
    const ControlProcess u = ControlProcess::constant(grid, start_control(spec));
    const ForwardResult result =
        simulate_forward(spec, u, grid, config.particles, config.seed);

    std::ofstream csv = open_output(dir, "forward.csv");
    csv << "t,mean_X,sd_X,min_X,max_X\n";
    for (int k = 0; k <= grid.steps; ++k) {
        const auto row = result.ensemble.state_row(k);
        const double mean = mean_of(row);
        double var = 0.0, lo = row[0], hi = row[0];
        for (double v : row) {
            var += (v - mean) * (v - mean);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        var /= std::max<std::size_t>(1, row.size() - 1);
        csv << format_number(grid.node(k)) << ',' << format_number(mean) << ','
            << format_number(std::sqrt(var)) << ',' << format_number(lo) << ','
            << format_number(hi) << "\n";
    }

    const LipschitzReport lip = measure_flow_lipschitz_report(result.flow, grid);
    std::ostringstream body;
    body << "terminal_mean = " << format_number(mean_of(result.ensemble.state_row(grid.steps)))
         << "\n";
    body << "measure_flow_max_step_ratio = " << format_number(lip.max_ratio) << "\n";
    write_summary(dir, config, body.str());
    return 0;
}

int run_solve_bsde(const RunConfig& config, const std::filesystem::path& dir) {
    const ProblemSpec spec = build_problem(config, "gbm");
    const TimeGrid grid{config.horizon, config.steps};
    const ControlProcess u = ControlProcess::constant(grid, start_control(spec));
    const ParticleEnsemble ens = simulate_ensemble(spec, u, grid, config.particles, config.seed);
    const BackwardSolution sol = solve_backward(spec, ens, u, basis_of(config));

    std::ofstream csv = open_output(dir, "bsde.csv");
    csv << "t,mean_X,mean_Y,mean_Z\n";
    for (int k = 0; k <= grid.steps; ++k) {
        csv << format_number(grid.node(k)) << ',' << format_number(mean_of(ens.state_row(k)))
            << ',' << format_number(mean_of(sol.y_row(k))) << ','
            << format_number(mean_of(sol.z_row(k))) << "\n";
    }

    const MartingaleReport mart = martingale_residual(spec, ens, u, sol);
    std::ostringstream body;
    body << "Y0 = " << format_number(mean_of(sol.y_row(0))) << "\n";
    body << "picard_iterations = " << sol.picard_iterations << "\n";
    body << "picard_residual = " << format_number(sol.picard_residual) << "\n";
    body << "martingale_max_sigma_ratio = " << format_number(mart.max_sigma_ratio) << "\n";
    write_summary(dir, config, body.str());
    return 0;
}

int run_optimize(const RunConfig& config, const std::filesystem::path& dir) {
    const ProblemSpec spec = build_problem(config, "lq");
    const TimeGrid grid{config.horizon, config.steps};
    const ControlProcess u0 = ControlProcess::constant(grid, start_control(spec));
    const OptimizationReport report = optimize(spec, u0, grid, config.particles, config.seed,
                                               optimizer_of(config), basis_of(config));

    std::ofstream iters = open_output(dir, "optimize_iters.csv");
    iters << "iteration,J,grad_sup\n";
    for (std::size_t i = 0; i < report.grad_sup_history.size(); ++i) {
        const double j =
            i < report.J_history.size() ? report.J_history[i] : report.J_history.back();
        iters << i << ',' << format_number(j) << ','
              << format_number(report.grad_sup_history[i]) << "\n";
    }

    std::ofstream control = open_output(dir, "optimize_control.csv");
    control << "t,u\n";
    for (int k = 0; k <= grid.steps; ++k)
        control << format_number(grid.node(k)) << ','
                << format_number(report.control.open_loop[static_cast<std::size_t>(k)]) << "\n";

    std::ostringstream body;
    body << "J = " << format_number(report.J) << "\n";
    body << "iterations = " << report.iterations << "\n";
    body << "converged = " << (report.converged ? "true" : "false") << "\n";
    body << "stationarity_residual = " << format_number(report.stationarity_residual) << "\n";
    write_summary(dir, config, body.str());
    return 0;
}

int run_risk(const RunConfig& config, const std::filesystem::path& dir) {
    const ProblemSpec spec = build_problem(config, "gbm");
    const TimeGrid grid{config.horizon, config.steps};
    const ControlProcess u = ControlProcess::constant(grid, start_control(spec));
    const ParticleEnsemble ens = simulate_ensemble(spec, u, grid, config.particles, config.seed);

    RiskDriverSpec driver;
    const double r = config.risk_r, rp = config.risk_rprime;
    driver.r = [r](double) { return r; };
    driver.r_prime = [rp](double) { return rp; };
    if (config.risk_quadratic) driver.F = [](double, double z) { return -0.5 * z * z; };

    const RiskQuote quote =
        risk(driver, [](double x) { return x; }, ens, grid, basis_of(config));

    std::ofstream csv = open_output(dir, "risk.csv");
    csv << "t,mean_Y,phi,stderr\n";
    for (int k = 0; k <= grid.steps; ++k) {
        csv << format_number(grid.node(k)) << ','
            << format_number(quote.mean_y[static_cast<std::size_t>(k)]) << ','
            << format_number(quote.phi_path[static_cast<std::size_t>(k)]) << ','
            << format_number(stderr_of_mean(quote.solution.y_row(k))) << "\n";
    }

    std::ostringstream body;
    body << "phi0 = " << format_number(quote.phi0) << "\n";
    body << "mc_stderr = " << format_number(quote.mc_stderr) << "\n";
    body << "picard_iterations = " << quote.solution.picard_iterations << "\n";
    write_summary(dir, config, body.str());
    return 0;
}

int run_benchmark_portfolio(const RunConfig& config, const std::filesystem::path& dir) {
    PortfolioParams params;
    const double b0 = config.pb_b0, s0 = config.pb_sigma0, r0 = config.pb_r0;
    params.b0 = [b0](double) { return b0; };
    params.sigma0 = [s0](double) { return s0; };
    params.r0 = [r0](double) { return r0; };
    params.x0 = config.x0;

    const TimeGrid grid{config.horizon, config.steps};
    BenchmarkSettings settings;
    settings.particles = config.particles;
    settings.diagnostic_particles = std::max(config.particles, 2 * config.particles);
    settings.entropy_particles = std::max(config.particles, 50000);
    settings.seed = config.seed;
    settings.optimizer = optimizer_of(config);
    settings.basis = basis_of(config);

    const PortfolioBenchmark report = run_benchmark(params, grid, settings);

    std::ofstream csv = open_output(dir, "benchmark.csv");
    csv << "t,Z_recovered,Z_closed_form,grad_residual,p0_mean,lambda0_mean\n";
    for (int k = 0; k <= grid.steps; ++k) {
        csv << format_number(grid.node(k)) << ','
            << format_number(report.z_recovered[static_cast<std::size_t>(k)]) << ','
            << format_number(report.z_closed[static_cast<std::size_t>(k)]) << ','
            << format_number(report.grad_per_node[static_cast<std::size_t>(k)]) << ','
            << format_number(report.p0_mean[static_cast<std::size_t>(k)]) << ','
            << format_number(report.lambda0_mean[static_cast<std::size_t>(k)]) << "\n";
    }

    std::ostringstream body;
    body << "minimal_risk_numeric = " << format_number(report.minimal_risk_numeric) << "\n";
    body << "minimal_risk_candidate = " << format_number(report.minimal_risk_candidate) << "\n";
    body << "minimal_risk_closed_form = " << format_number(report.minimal_risk_target) << "\n";
    body << "minimal_risk_alt_form = " << format_number(report.minimal_risk_alt) << "\n";
    body << "entropy_analytic = " << format_number(report.entropy_analytic_value) << "\n";
    body << "entropy_mc = " << format_number(report.entropy_mc_value) << "\n";
    body << "entropy_mc_stderr = " << format_number(report.entropy_mc_stderr) << "\n";
    body << "z_max_rel_err_interior = " << format_number(report.z_max_rel_err_interior) << "\n";
    body << "stationarity_sup = " << format_number(report.stationarity_sup) << "\n";
    body << "p0_lambda0_ms_rel = " << format_number(report.p0_lambda0_ms_rel) << "\n";
    body << "lambda0_min = " << format_number(report.lambda0_min) << "\n";
    body << "optimizer_iterations = " << report.optimization.iterations << "\n";
    body << "optimizer_converged = " << (report.optimization.converged ? "true" : "false")
         << "\n";
    body << "wealth_positive = " << (report.wealth_positive ? "true" : "false") << "\n";
    body << "step_guard_ok = " << (report.step_guard_ok ? "true" : "false") << "\n";
    write_summary(dir, config, body.str());
    return 0;
}

int run_property_suite(const RunConfig& config, const std::filesystem::path& dir) {
    const std::vector<PropertyResult> results = property_suite();
    std::ostringstream table;
    std::size_t failed = 0;
    for (const PropertyResult& r : results) {
        table << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << "  (" << r.detail << ")\n";
        if (!r.passed) ++failed;
    }
    table << results.size() - failed << "/" << results.size() << " properties passed\n";
    std::cout << table.str();
    write_summary(dir, config, table.str());
    return failed == 0 ? 0 : 1;
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

int run(const RunConfig& config) {
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);

    if (config.command == "simulate-forward") return run_simulate_forward(config, dir);
    if (config.command == "solve-bsde") return run_solve_bsde(config, dir);
    if (config.command == "optimize") return run_optimize(config, dir);
    if (config.command == "risk") return run_risk(config, dir);
    if (config.command == "benchmark-portfolio") return run_benchmark_portfolio(config, dir);
    if (config.command == "property-suite") return run_property_suite(config, dir);
    throw std::invalid_argument("unknown command '" + config.command + "'");
}

}  // namespace mfc
