#include "doctest.h"

#include "mfc/adjoint.hpp"
#include "mfc/forward.hpp"
#include "mfc/problem.hpp"
#include "mfc/regression.hpp"
#include "mfc/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace {

std::vector<double> random_direction(int nodes, std::uint64_t seed) {
    std::vector<double> d(static_cast<std::size_t>(nodes));
    for (int k = 0; k < nodes; ++k) d[static_cast<std::size_t>(k)] = mfc::rng::standard_normal(seed, 0, k);
    return d;
}

}  // namespace

TEST_SUITE("adjoint") {

TEST_CASE("hamiltonian assembles all six terms") {
    const mfc::ProblemSpec spec = mfc::make_portfolio_problem(0.04, 0.2, 0.05, 1.0);
    mfc::CoefArgs a;
    a.t = 0.3;
    a.x = 1.4;
    a.y = 0.8;
    a.z = 0.21;
    a.u = 0.9;
    const std::vector<double> m = {1.4, 2.1, 3.3};
    const std::vector<double> n = {0.8, 0.7, 0.6};
    a.m_stats = m;
    a.n_stats = n;
    const std::vector<double> p1 = {0.1, -0.2, 0.05};
    const std::vector<double> l1 = {0.3, 0.0, -0.1};
    const std::vector<double> mp = {0.5, 0.4, 0.3};
    const std::vector<double> np = {-0.2, 0.1, 0.6};

    const double p0 = 1.1, q0 = -0.4, l0 = 0.95;
    const double b = 0.9 * 0.04 * 1.4;
    const double s = 0.9 * 0.2 * 1.4;
    const double g = -0.05 * 0.8 - 0.5 * 0.21 * 0.21;
    double expected = p0 * b + q0 * s + l0 * g;
    for (int j = 0; j < 3; ++j) expected += p1[j] * mp[j] + l1[j] * np[j];

    const double h = mfc::hamiltonian(spec, a, p0, q0, l0, p1, l1, mp, np);
    CHECK(std::abs(h - expected) < 1e-12);

    const std::vector<double> wrong(2, 0.0);
    CHECK_THROWS_AS(mfc::hamiltonian(spec, a, p0, q0, l0, wrong, l1, mp, np),
                    std::invalid_argument);
}

TEST_CASE("statistic time-derivatives match the generator means") {
    const mfc::TimeGrid grid(1.0, 10);
    const mfc::ProblemSpec spec = mfc::make_gbm(0.05, 0.2, 1.0);
    const auto u = mfc::ControlProcess::constant(grid, 0.0);
    const auto ens = mfc::simulate_ensemble(spec, u, grid, 3000, 5);
    const int k = 4;
    const auto mp = mfc::m_prime_coords(spec, ens, u, k);
    REQUIRE(mp.size() == 3);

    double ex = 0.0, ex2 = 0.0, ex3 = 0.0;
    for (int i = 0; i < 3000; ++i) {
        const double x = ens.state(k, i);
        ex += x;
        ex2 += x * x;
        ex3 += x * x * x;
    }
    ex /= 3000.0;
    ex2 /= 3000.0;
    ex3 /= 3000.0;
    // mean of b phi' + sigma^2/2 phi'' with b = mu x, sigma = nu x.
    CHECK(std::abs(mp[0] - 0.05 * ex) < 1e-12);
    CHECK(std::abs(mp[1] - (2.0 * 0.05 + 0.04) * ex2) < 1e-12);
    CHECK(std::abs(mp[2] - (3.0 * 0.05 + 3.0 * 0.04) * ex3) < 1e-11);
}

TEST_CASE("first adjoint vanishes without initial-value cost") {
    const mfc::TimeGrid grid(1.0, 20);
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto u = mfc::ControlProcess::constant(grid, -0.3);
    const auto pipe = mfc::solve_pipeline(spec, u, grid, 1000, 8, {}, true, true);
    for (int k = 0; k <= grid.steps; ++k) {
        for (int i = 0; i < 1000; ++i) {
            CHECK(std::abs(pipe.adjoints.lambda0_at(k, i)) < 1e-14);
        }
        for (double v : pipe.adjoints.lambda1_row(k)) CHECK(std::abs(v) < 1e-14);
    }
}

TEST_CASE("quadratic-cost gradient equals its closed form per node") {
    const mfc::TimeGrid grid(1.0, 20);
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto u = mfc::ControlProcess::constant(grid, -0.3);
    const auto pipe = mfc::solve_pipeline(spec, u, grid, 2000, 8, {}, true);
    const auto grad =
        mfc::control_gradient(spec, pipe.ensemble, pipe.backward, pipe.adjoints, u, {});
    REQUIRE(grad.per_node.size() == static_cast<std::size_t>(grid.nodes()));

    // d_uH = 2u + p0 and the mean of p0 at every node is 2 E[X_T]: chained
    // conditional expectations preserve means exactly.
    const double xbar = mfc::mean_of(pipe.ensemble.state_row(grid.steps));
    for (int k = 0; k < grid.steps; ++k) {
        CHECK(std::abs(grad.per_node[static_cast<std::size_t>(k)] - (2.0 * -0.3 + 2.0 * xbar)) <
              1e-9);
    }
    CHECK(grad.per_node[static_cast<std::size_t>(grid.steps)] == 0.0);
}

TEST_CASE("adjoint prediction matches the quadratic difference quotient") {
    const mfc::TimeGrid grid(1.0, 20);
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto u = mfc::ControlProcess::constant(grid, -0.2);
    const int particles = 2000;
    const auto pipe = mfc::solve_pipeline(spec, u, grid, particles, 8, {}, true);
    const auto grad =
        mfc::control_gradient(spec, pipe.ensemble, pipe.backward, pipe.adjoints, u, {});

    const auto d = random_direction(grid.nodes(), 77);
    double predicted = 0.0;
    for (int k = 0; k < grid.steps; ++k)
        predicted += grad.per_node[static_cast<std::size_t>(k)] * d[static_cast<std::size_t>(k)] *
                     grid.dt();
    const double measured = mfc::gateaux_dJ(spec, u, d, grid, particles, 8, {});
    CHECK(std::abs(predicted - measured) < 1e-6 * (1.0 + std::abs(measured)));
}

TEST_CASE("adjoint prediction tracks the wealth-control difference quotient") {
    const mfc::TimeGrid grid(1.0, 50);
    const mfc::ProblemSpec spec = mfc::make_portfolio_problem(0.04, 0.2, 0.05, 1.0);
    const auto u = mfc::ControlProcess::constant(grid, 0.5);
    const int particles = 5000;
    const auto pipe = mfc::solve_pipeline(spec, u, grid, particles, 8, {}, true);
    const auto grad =
        mfc::control_gradient(spec, pipe.ensemble, pipe.backward, pipe.adjoints, u, {});

    for (std::uint64_t dir_seed : {101ULL, 102ULL}) {
        const auto d = random_direction(grid.nodes(), dir_seed);
        double predicted = 0.0;
        for (int k = 0; k < grid.steps; ++k)
            predicted += grad.per_node[static_cast<std::size_t>(k)] *
                         d[static_cast<std::size_t>(k)] * grid.dt();
        const double measured = mfc::gateaux_dJ(spec, u, d, grid, particles, 8, {}, 1e-4);
        CHECK(std::abs(predicted - measured) <= 0.02 * (1.0 + std::abs(measured)));
    }
}

TEST_CASE("projected gradient solves the quadratic control problem") {
    const mfc::TimeGrid grid(1.0, 40);
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto u0 = mfc::ControlProcess::constant(grid, 0.0);
    mfc::OptimizerSettings settings;
    const auto report = mfc::optimize(spec, u0, grid, 8000, 42, settings, {});
    CHECK(report.converged);
    CHECK(report.stationarity_residual < settings.tol);

    // Constant optimum -x0 / (T + 1); the terminal node never enters J.
    for (int k = 0; k < grid.steps; ++k) {
        CHECK(std::abs(report.control.open_loop[static_cast<std::size_t>(k)] + 0.5) < 0.015);
    }
    CHECK(std::abs(report.J - 0.54) < 0.015 * 0.54);

    // Accepted iterates never increase the objective when minimizing.
    for (std::size_t i = 1; i < report.J_history.size(); ++i) {
        CHECK(report.J_history[i] <= report.J_history[i - 1] + 1e-12);
    }
}

TEST_CASE("duality defects shrink to noise on the quadratic problem") {
    const mfc::TimeGrid grid(1.0, 20);
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto u_ref = mfc::ControlProcess::constant(grid, -0.3);
    const auto u_alt = mfc::ControlProcess::constant(grid, 0.1);
    const auto report = mfc::duality_residuals(spec, u_ref, u_alt, grid, 2000, 12, {});

    // No measure coupling and no initial-value cost: the two measure-side
    // identities are exactly zero.
    CHECK(std::abs(report.terms[1].residual) < 1e-13);
    CHECK(std::abs(report.terms[3].residual) < 1e-13);

    for (int which : {0, 2}) {
        const auto& term = report.terms[static_cast<std::size_t>(which)];
        const double bound = std::max(4.0 * term.stderr_, 0.08 * std::max(term.scale, 1e-8));
        CHECK(std::abs(term.residual) <= bound);
    }
}

TEST_CASE("open-loop-only entry points reject feedback controls") {
    const mfc::TimeGrid grid(1.0, 10);
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto feedback = mfc::ControlProcess::feedback_rule([](double, double x) { return -x; });
    const auto d = random_direction(grid.nodes(), 3);
    CHECK_THROWS_AS(mfc::gateaux_dJ(spec, feedback, d, grid, 100, 1, {}), std::invalid_argument);
    CHECK_THROWS_AS(mfc::optimize(spec, feedback, grid, 100, 1, {}, {}), std::invalid_argument);

    const auto u = mfc::ControlProcess::constant(grid, 0.0);
    const std::vector<double> bad_dir(3, 1.0);
    CHECK_THROWS_AS(mfc::gateaux_dJ(spec, u, bad_dir, grid, 100, 1, {}), std::invalid_argument);
}

TEST_CASE("objective of the uncontrolled quadratic problem is the variance sum") {
    const mfc::TimeGrid grid(1.0, 30);
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto u = mfc::ControlProcess::constant(grid, 0.0);
    const double j = mfc::evaluate_J(spec, u, grid, 20000, 4, {});
    // X_T = x0 + sigma B_T: E[X_T^2] = 1 + 0.04.
    CHECK(std::abs(j - 1.04) < 0.02);
}

TEST_CASE("full-information gradients come back per particle") {
    const mfc::TimeGrid grid(1.0, 10);
    mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    spec.info = mfc::InformationMode::Full;
    const auto u = mfc::ControlProcess::feedback_rule([](double, double) { return -0.25; });
    const auto ens = mfc::simulate_ensemble(spec, u, grid, 500, 6);
    const auto back = mfc::solve_backward(spec, ens, u, {});
    const auto adj = mfc::solve_adjoints(spec, ens, back, u, {});
    const auto grad = mfc::control_gradient(spec, ens, back, adj, u, {});
    CHECK(grad.per_particle.size() ==
          static_cast<std::size_t>(grid.nodes()) * 500);
    CHECK(grad.per_node.size() == static_cast<std::size_t>(grid.nodes()));
}

}  // TEST_SUITE
