// Acceptance gate for the solver suite. Each numbered criterion prints one
// [PASS] / [FAIL] line with its wall time; the process exits nonzero when
// any criterion fails. Every tolerance is pinned here, in code.

#include "mfc/adjoint.hpp"
#include "mfc/backward.hpp"
#include "mfc/config.hpp"
#include "mfc/forward.hpp"
#include "mfc/measure.hpp"
#include "mfc/portfolio.hpp"
#include "mfc/problem.hpp"
#include "mfc/regression.hpp"
#include "mfc/risk.hpp"
#include "mfc/rng.hpp"
#include "mfc/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

struct Checker {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
}

int g_failures = 0;

void run_criterion(int id, const std::string& label, double time_budget_s,
                   const std::function<void(Checker&)>& body) {
    Checker check;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(check);
    } catch (const std::exception& e) {
        check.require(false, std::string("exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.require(elapsed < time_budget_s,
                  "took " + fmt(elapsed) + "s, budget " + fmt(time_budget_s) + "s");
    if (!check.ok) ++g_failures;
    std::printf("[%s] criterion %d: %s (%.2fs)%s%s\n", check.ok ? "PASS" : "FAIL", id,
                label.c_str(), elapsed, check.detail.empty() ? "" : " -- ",
                check.detail.c_str());
    std::fflush(stdout);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<double> normal_direction(int nodes, std::uint64_t seed) {
    std::vector<double> d(static_cast<std::size_t>(nodes));
    for (int k = 0; k < nodes; ++k)
        d[static_cast<std::size_t>(k)] = mfc::rng::standard_normal(seed, 1, k);
    return d;
}

// Criterion 5 helper: adjoint chain-rule prediction against the symmetric
// difference quotient along random open-loop directions.
void check_gateaux(Checker& check, const mfc::ProblemSpec& spec, double base_control,
                   std::uint64_t seed_base, const std::string& tag) {
    const mfc::TimeGrid grid(1.0, 50);
    const int particles = 10000;
    const auto u = mfc::ControlProcess::constant(grid, base_control);
    const auto pipe = mfc::solve_pipeline(spec, u, grid, particles, 8, {}, true);
    const auto grad =
        mfc::control_gradient(spec, pipe.ensemble, pipe.backward, pipe.adjoints, u, {});
    for (int dir = 0; dir < 5; ++dir) {
        const auto d = normal_direction(grid.nodes(), seed_base + dir);
        double predicted = 0.0;
        for (int k = 0; k < grid.steps; ++k)
            predicted += grad.per_node[static_cast<std::size_t>(k)] *
                         d[static_cast<std::size_t>(k)] * grid.dt();
        const double measured = mfc::gateaux_dJ(spec, u, d, grid, particles, 8, {}, 1e-4);
        const double tol = 0.02 * (1.0 + std::abs(measured));
        check.require(std::abs(predicted - measured) <= tol,
                      tag + " direction " + std::to_string(dir) + ": predicted " +
                          fmt(predicted) + " vs measured " + fmt(measured));
    }
}

// Criterion 8 helper: the four pathwise product-rule identities at one grid
// resolution.
mfc::DualityReport duality_at(const mfc::ProblemSpec& spec, double u_ref_value,
                              double u_alt_value, int steps) {
    const mfc::TimeGrid grid(1.0, steps);
    const auto u_ref = mfc::ControlProcess::constant(grid, u_ref_value);
    const auto u_alt = mfc::ControlProcess::constant(grid, u_alt_value);
    return mfc::duality_residuals(spec, u_ref, u_alt, grid, 20000, 2024, {});
}

void check_duality_pair(Checker& check, const mfc::ProblemSpec& spec, double u_ref_value,
                        double u_alt_value, const std::string& tag) {
    const auto coarse = duality_at(spec, u_ref_value, u_alt_value, 50);
    const auto fine = duality_at(spec, u_ref_value, u_alt_value, 100);
    static const char* names[4] = {"state", "state-law", "value", "value-law"};
    for (int j = 0; j < 4; ++j) {
        const auto& c = coarse.terms[static_cast<std::size_t>(j)];
        const auto& f = fine.terms[static_cast<std::size_t>(j)];
        const double tiny_c = 1e-10 * (1.0 + c.scale);
        const double tiny_f = 1e-10 * (1.0 + f.scale);
        check.require(std::abs(c.residual) <= 0.15 * std::max(c.scale, 1e-8) + tiny_c,
                      tag + " " + names[j] + " defect at K=50 is " + fmt(c.residual) +
                          " vs scale " + fmt(c.scale));
        const double allowed =
            std::max(0.75 * std::abs(c.residual), 3.0 * f.stderr_ + tiny_f);
        check.require(std::abs(f.residual) <= allowed,
                      tag + " " + names[j] + " defect did not shrink: K=50 " +
                          fmt(c.residual) + ", K=100 " + fmt(f.residual) + ", noise " +
                          fmt(f.stderr_));
    }
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");

    run_criterion(1, "weighted-norm closed forms", 1.0, [](Checker& check) {
        const double n_dirac = mfc::norm_squared(mfc::EmpiricalMeasure::dirac(0.7));
        check.require(std::abs(n_dirac - kSqrtPi) < 1e-10,
                      "dirac norm " + fmt(n_dirac) + " != sqrt(pi)");
        const double n_two =
            mfc::norm_squared(mfc::EmpiricalMeasure::equal_weights({0.0, 2.0}));
        const double two_target = 0.5 * kSqrtPi * (1.0 + std::exp(-1.0));
        check.require(std::abs(n_two - two_target) < 1e-10,
                      "two-atom norm " + fmt(n_two) + " != " + fmt(two_target));
        const double d2 = mfc::distance_squared(mfc::EmpiricalMeasure::dirac(0.0),
                                                mfc::EmpiricalMeasure::dirac(2.0));
        const double d_target = 2.0 * kSqrtPi * (1.0 - std::exp(-1.0));
        check.require(std::abs(d2 - d_target) < 1e-10,
                      "dirac distance " + fmt(d2) + " != " + fmt(d_target));
    });

    run_criterion(2, "norm dominated by coupled second moments", 5.0, [](Checker& check) {
        for (int pair = 0; pair < 200; ++pair) {
            std::vector<double> xs(16), ys(16);
            double msq = 0.0;
            for (int i = 0; i < 16; ++i) {
                xs[static_cast<std::size_t>(i)] =
                    2.0 * mfc::rng::standard_normal(1000, pair, 2 * i);
                ys[static_cast<std::size_t>(i)] =
                    xs[static_cast<std::size_t>(i)] +
                    0.7 * mfc::rng::standard_normal(1000, pair, 2 * i + 1);
                const double gap =
                    xs[static_cast<std::size_t>(i)] - ys[static_cast<std::size_t>(i)];
                msq += gap * gap;
            }
            msq /= 16.0;
            const double d2 =
                mfc::distance_squared(mfc::EmpiricalMeasure::equal_weights(xs),
                                      mfc::EmpiricalMeasure::equal_weights(ys));
            check.require(d2 <= kSqrtPi * msq + 1e-12,
                          "pair " + std::to_string(pair) + ": " + fmt(d2) + " > " +
                              fmt(kSqrtPi * msq));
            if (!check.ok) break;
        }
    });

    run_criterion(3, "forward ensembles hit their mean laws", 60.0, [](Checker& check) {
        const mfc::TimeGrid grid(1.0, 100);
        const int particles = 100000;

        const mfc::ProblemSpec gbm = mfc::make_gbm(0.05, 0.2, 1.0);
        const auto u = mfc::ControlProcess::constant(grid, 0.0);
        const auto ens = mfc::simulate_ensemble(gbm, u, grid, particles, 42);
        const double exact = std::pow(1.0 + 0.05 * grid.dt(), grid.steps);
        const double mean = mfc::mean_of(ens.state_row(grid.steps));
        const double se = mfc::stderr_of_mean(ens.state_row(grid.steps));
        check.require(std::abs(mean - exact) <= 3.0 * se,
                      "drifted mean " + fmt(mean) + " vs " + fmt(exact) + " (se " + fmt(se) +
                          ")");

        const mfc::ProblemSpec mr = mfc::make_mean_reverting(1.0, 0.2, 1.0);
        const auto ens2 = mfc::simulate_ensemble(mr, u, grid, particles, 43);
        const double drift = mfc::mean_of(ens2.state_row(grid.steps)) - 1.0;
        check.require(std::abs(drift) <= 3.0 * 0.2 * std::sqrt(1.0 / particles),
                      "interaction mean drifted by " + fmt(drift));
        // The cross-sectional reversion cancels exactly; the mean follows the
        // driving noise to machine precision.
        double bbar = 0.0;
        for (int k = 0; k < grid.steps; ++k) bbar += mfc::mean_of(ens2.increment_row(k));
        check.require(std::abs(drift - 0.2 * bbar) < 1e-12,
                      "conservation identity broken: " + fmt(drift - 0.2 * bbar));
    });

    run_criterion(4, "backward values match closed forms", 150.0, [](Checker& check) {
        const mfc::TimeGrid grid(1.0, 100);
        const int particles = 100000;
        mfc::ProblemSpec spec = mfc::make_gbm(0.05, 0.2, 1.0);
        spec.g = [](const mfc::CoefArgs& a) { return -0.1 * a.n_stats[0]; };
        const auto u = mfc::ControlProcess::constant(grid, 0.0);
        const auto ens = mfc::simulate_ensemble(spec, u, grid, particles, 42);

        const std::vector<double> ones(particles, 1.0);
        const auto sol1 = mfc::solve_backward_with_terminal(spec, ens, u, {}, ones);
        const double y1 = mfc::mean_of(sol1.y_row(0));
        check.require(std::abs(y1 - std::exp(-0.1)) <= 1e-2 * std::exp(-0.1),
                      "unit terminal: " + fmt(y1) + " vs " + fmt(std::exp(-0.1)));

        const std::vector<double> twos(particles, 2.0);
        const auto sol2 = mfc::solve_backward_with_terminal(spec, ens, u, {}, twos);
        const double y2 = mfc::mean_of(sol2.y_row(0));
        check.require(std::abs(y2 - 2.0 * std::exp(-0.1)) <= 2e-2 * std::exp(-0.1),
                      "doubled terminal: " + fmt(y2));

        mfc::ProblemSpec plain = mfc::make_gbm(0.05, 0.2, 1.0);
        const auto sol3 = mfc::solve_backward(plain, ens, u, {});
        const double conserved = mfc::mean_of(sol3.y_row(0));
        const double target = mfc::mean_of(ens.state_row(grid.steps));
        check.require(std::abs(conserved - target) <= 1e-9 * (1.0 + std::abs(target)),
                      "zero-driver mean " + fmt(conserved) + " vs terminal mean " +
                          fmt(target));

        // The unit-terminal solution is deterministic, so its martingale
        // residual gets an absolute bound; the sigma-ratio test needs the
        // stochastic zero-driver solve where the per-node scale is real.
        const auto report1 = mfc::martingale_residual(spec, ens, u, sol1);
        check.require(report1.max_abs < 1e-6,
                      "deterministic-solution residual " + fmt(report1.max_abs));
        const auto report3 = mfc::martingale_residual(plain, ens, u, sol3);
        check.require(report3.max_sigma_ratio < 3.0,
                      "martingale residual at " + fmt(report3.max_sigma_ratio) + " sigma");
    });

    run_criterion(5, "adjoint gradients predict difference quotients", 120.0,
                  [](Checker& check) {
                      check_gateaux(check, mfc::make_lq(0.2, 1.0), -0.2, 300, "quadratic");
                      check_gateaux(check, mfc::make_portfolio_problem(0.04, 0.2, 0.05, 1.0),
                                    0.5, 400, "wealth");
                  });

    run_criterion(6, "projected gradient reaches the quadratic optimum", 120.0,
                  [](Checker& check) {
                      const mfc::TimeGrid grid(1.0, 100);
                      const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
                      const auto u0 = mfc::ControlProcess::constant(grid, 0.0);
                      mfc::OptimizerSettings settings;
                      const auto report = mfc::optimize(spec, u0, grid, 10000, 42, settings, {});
                      check.require(report.converged, "optimizer did not converge");
                      for (int k = 0; k < grid.steps; ++k) {
                          const double uk = report.control.open_loop[static_cast<std::size_t>(k)];
                          check.require(std::abs(uk + 0.5) <= 0.01,
                                        "node " + std::to_string(k) + " control " + fmt(uk));
                          if (!check.ok) break;
                      }
                      check.require(std::abs(report.J - 0.54) <= 0.01 * 0.54,
                                    "objective " + fmt(report.J) + " vs 0.54");
                  });

    run_criterion(7, "wealth benchmark reproduces its closed forms", 300.0,
                  [](Checker& check) {
                      const mfc::TimeGrid grid(1.0, 100);
                      mfc::PortfolioParams params;
                      mfc::BenchmarkSettings settings;  // N=1e4 / diag 4e4 / entropy 1e5
                      const auto bench = mfc::run_benchmark(params, grid, settings);

                      check.require(bench.z_max_rel_err_interior <= 0.03,
                                    "volatility recovery off by " +
                                        fmt(bench.z_max_rel_err_interior));
                      const double scale = 1.0 + std::abs(bench.minimal_risk_candidate);
                      check.require(bench.stationarity_sup <= 1e-3 * scale,
                                    "stationarity residual " + fmt(bench.stationarity_sup));
                      check.require(bench.p0_lambda0_ms_rel < 0.02,
                                    "adjoint identity off by " + fmt(bench.p0_lambda0_ms_rel));
                      check.require(std::abs(bench.entropy_mc_value -
                                             bench.entropy_analytic_value) <=
                                        3.0 * bench.entropy_mc_stderr,
                                    "entropy " + fmt(bench.entropy_mc_value) + " vs " +
                                        fmt(bench.entropy_analytic_value) + " (se " +
                                        fmt(bench.entropy_mc_stderr) + ")");
                      check.require(std::abs(bench.minimal_risk_numeric -
                                             bench.minimal_risk_target) <=
                                        0.01 * (1.0 + std::abs(bench.minimal_risk_target)),
                                    "minimal risk " + fmt(bench.minimal_risk_numeric) +
                                        " vs " + fmt(bench.minimal_risk_target));
                      check.require(bench.wealth_positive, "wealth paths crossed zero");
                      check.require(bench.step_guard_ok, "volatility step guard violated");
                      check.require(bench.lambda0_min > 0.0, "lambda0 lost positivity");
                  });

    run_criterion(8, "duality defects vanish under refinement", 300.0, [](Checker& check) {
        check_duality_pair(check, mfc::make_lq(0.2, 1.0), -0.3, 0.1, "quadratic");
        check_duality_pair(check, mfc::make_portfolio_problem(0.04, 0.2, 0.05, 1.0), 0.5, 0.9,
                           "wealth");
    });

    run_criterion(9, "risk quotes translate and respect dominance", 120.0,
                  [](Checker& check) {
                      const mfc::TimeGrid grid(1.0, 100);
                      const mfc::ProblemSpec gbm = mfc::make_gbm(0.05, 0.2, 1.0);
                      const auto u = mfc::ControlProcess::constant(grid, 0.0);
                      const auto ens = mfc::simulate_ensemble(gbm, u, grid, 10000, 42);

                      mfc::RiskDriverSpec driver;
                      driver.r = [](double t) { return 0.01 + 0.02 * t; };
                      driver.r_prime = [](double) { return 0.1; };
                      driver.F = [](double, double z) { return -0.5 * z * z; };
                      const auto payoff = [](double x) { return x; };
                      for (double a : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
                          const double residual = mfc::translation_invariance_check(
                              driver, payoff, a, ens, grid);
                          check.require(residual < 1e-2 * (1.0 + std::abs(a)),
                                        "shift " + fmt(a) + " residual " + fmt(residual));
                      }

                      const auto low = mfc::risk(driver, payoff, ens, grid);
                      const auto high =
                          mfc::risk(driver, [](double x) { return 1.2 * x; }, ens, grid);
                      check.require(high.phi0 <=
                                        low.phi0 + 3.0 * (low.mc_stderr + high.mc_stderr),
                                    "dominated payoff quoted riskier: " + fmt(high.phi0) +
                                        " vs " + fmt(low.phi0));
                  });

    run_criterion(10, "batch runs are byte-identical", 60.0, [](Checker& check) {
        namespace fs = std::filesystem;
        const fs::path base = fs::temp_directory_path() / "mfc_acceptance_det";
        fs::remove_all(base);
        mfc::RunConfig config;
        config.command = "solve-bsde";
        config.problem = "gbm";
        config.particles = 2000;
        config.steps = 40;
        config.seed = 11;

        config.output_dir = (base / "a").string();
        check.require(mfc::run(config) == 0, "first run failed");
        const std::string first = read_file(base / "a" / "bsde.csv");

        check.require(mfc::run(config) == 0, "rerun failed");
        const std::string again = read_file(base / "a" / "bsde.csv");
        check.require(!first.empty() && first == again, "rerun changed bsde.csv");

        config.output_dir = (base / "b").string();
        check.require(mfc::run(config) == 0, "second directory run failed");
        const std::string other = read_file(base / "b" / "bsde.csv");
        check.require(first == other, "output directory leaked into bsde.csv");
        fs::remove_all(base);
    });

    std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "OK" : "FAILED", g_failures);
    return g_failures == 0 ? 0 : 1;
}
