#include "doctest.h"

#include "mfc/problem.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace {

// Owns the statistic vectors so the spans inside the args stay valid.
struct ArgsBox {
    std::vector<double> m, n;
    mfc::CoefArgs a;

    operator const mfc::CoefArgs&() const { return a; }
};

ArgsBox args_with(double t, double x, double y, double z, double u, std::vector<double> m,
                  std::vector<double> n) {
    ArgsBox box;
    box.m = std::move(m);
    box.n = std::move(n);
    box.a.t = t;
    box.a.x = x;
    box.a.y = y;
    box.a.z = z;
    box.a.u = u;
    box.a.m_stats = box.m;
    box.a.n_stats = box.n;
    return box;
}

}  // namespace

TEST_SUITE("problem") {

TEST_CASE("gbm preset evaluates drift and diffusion") {
    const mfc::ProblemSpec spec = mfc::make_gbm(0.05, 0.2, 1.0);
    const auto a = args_with(0.3, 2.0, 0.0, 0.0, 0.7, {2.0, 4.0, 8.0}, {0.0, 0.0, 0.0});
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::B, a) - 0.1) < 1e-14);
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::Sigma, a) - 0.4) < 1e-14);
    CHECK(mfc::eval_coefficient(spec, mfc::Coefficient::F, a) == 0.0);
    CHECK(mfc::eval_coefficient(spec, mfc::Coefficient::H, a) == 0.0);
}

TEST_CASE("mean-reverting preset reads the first m statistic") {
    const mfc::ProblemSpec spec = mfc::make_mean_reverting(2.0, 0.3, 1.0);
    const auto a = args_with(0.0, 1.5, 0.0, 0.0, 0.0, {2.5, 0.0, 0.0}, {0.0, 0.0, 0.0});
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::B, a) - 2.0) < 1e-14);
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::Sigma, a) - 0.3) < 1e-14);
}

TEST_CASE("lq preset cost pieces") {
    const mfc::ProblemSpec spec = mfc::make_lq(0.2, 1.0);
    const auto a = args_with(0.1, 1.3, 0.0, 0.0, -0.5, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::B, a) + 0.5) < 1e-14);
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::F, a) - 0.25) < 1e-14);
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::H, a) - 1.69) < 1e-14);
    CHECK(spec.sense == mfc::OptimizeSense::Minimize);
}

TEST_CASE("portfolio preset wires the entropic driver") {
    const mfc::ProblemSpec spec = mfc::make_portfolio_problem(0.04, 0.2, 0.05, 1.0);
    const auto a = args_with(0.2, 2.0, 0.6, 0.3, 0.5, {2.0, 0.0, 0.0}, {1.5, 0.0, 0.0});
    // b = u b0 x, sigma = u sigma0 x
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::B, a) - 0.04) < 1e-14);
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::Sigma, a) - 0.2) < 1e-14);
    // g = -r0 mean(n) - z^2/2
    const double g = mfc::eval_coefficient(spec, mfc::Coefficient::G, a);
    CHECK(std::abs(g - (-0.05 * 1.5 - 0.045)) < 1e-14);
    // phi = y, maximized
    CHECK(std::abs(mfc::eval_coefficient(spec, mfc::Coefficient::Phi, a) - 0.6) < 1e-14);
    CHECK(spec.sense == mfc::OptimizeSense::Maximize);
}

TEST_CASE("registered derivatives match finite differences") {
    const mfc::ProblemSpec spec = mfc::make_portfolio_problem(0.04, 0.2, 0.05, 1.0);
    const auto a = args_with(0.2, 1.7, 0.4, 0.25, 0.8, {1.7, 3.0, 5.2}, {0.4, 0.2, 0.1});
    struct Probe {
        mfc::Coefficient which;
        mfc::Wrt wrt;
    };
    const Probe probes[] = {
        {mfc::Coefficient::B, mfc::Wrt::x()},     {mfc::Coefficient::B, mfc::Wrt::u()},
        {mfc::Coefficient::Sigma, mfc::Wrt::x()}, {mfc::Coefficient::Sigma, mfc::Wrt::u()},
        {mfc::Coefficient::G, mfc::Wrt::z()},     {mfc::Coefficient::G, mfc::Wrt::n(0)},
        {mfc::Coefficient::Phi, mfc::Wrt::y()},
    };
    for (const auto& probe : probes) {
        const double analytic = mfc::eval_derivative(spec, probe.which, probe.wrt, a);
        // Reconstruct the finite difference by hand to confirm agreement.
        mfc::ProblemSpec plain = spec;
        plain.derivatives.clear();
        const double fd = mfc::eval_derivative(plain, probe.which, probe.wrt, a);
        CHECK(std::abs(analytic - fd) < 1e-6 * (1.0 + std::abs(analytic)));
    }
}

TEST_CASE("finite-difference fallback handles an unregistered coefficient") {
    mfc::ProblemSpec spec = mfc::make_gbm();
    spec.f = [](const mfc::CoefArgs& a) { return std::sin(a.u) * a.x; };
    // Drop the preset registrations so the replacement really is unregistered.
    spec.derivatives.clear();
    const auto a = args_with(0.0, 2.0, 0.0, 0.0, 0.6, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
    const double d = mfc::eval_derivative(spec, mfc::Coefficient::F, mfc::Wrt::u(), a);
    CHECK(std::abs(d - std::cos(0.6) * 2.0) < 1e-8);
}

TEST_CASE("non-finite coefficient values are rejected") {
    mfc::ProblemSpec spec = mfc::make_gbm();
    spec.b = [](const mfc::CoefArgs&) { return std::nan(""); };
    const auto a = args_with(0.0, 1.0, 0.0, 0.0, 0.0, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
    CHECK_THROWS_AS(mfc::eval_coefficient(spec, mfc::Coefficient::B, a), std::domain_error);
}

TEST_CASE("control processes evaluate by mode") {
    const mfc::TimeGrid grid(1.0, 4);
    const auto constant = mfc::ControlProcess::constant(grid, 0.7);
    REQUIRE(constant.open_loop.size() == 5);
    CHECK(constant.value(grid, 3, 10.0) == 0.7);

    const auto open_loop = mfc::ControlProcess::open_loop_values({0.0, 0.1, 0.2, 0.3, 0.4});
    CHECK(open_loop.value(grid, 2, -1.0) == 0.2);

    const auto feedback =
        mfc::ControlProcess::feedback_rule([](double t, double x) { return t + 2.0 * x; });
    CHECK(feedback.mode == mfc::InformationMode::Full);
    CHECK(std::abs(feedback.value(grid, 2, 1.5) - 3.5) < 1e-14);
}

TEST_CASE("control set projection clips to the interval") {
    mfc::ControlSet set;
    set.lower = -1.0;
    set.upper = 2.0;
    CHECK(set.project(-3.0) == -1.0);
    CHECK(set.project(0.5) == 0.5);
    CHECK(set.project(9.0) == 2.0);
}

TEST_CASE("lipschitz probe is finite and scales with the coefficient") {
    const mfc::ProblemSpec spec = mfc::make_gbm(0.05, 0.2, 1.0);
    const double lb = mfc::lipschitz_probe(spec, mfc::Coefficient::B, 200, 11);
    const double ls = mfc::lipschitz_probe(spec, mfc::Coefficient::Sigma, 200, 11);
    CHECK(std::isfinite(lb));
    CHECK(std::isfinite(ls));
    CHECK(lb > 0.0);
    CHECK(ls > 0.0);
}

}  // TEST_SUITE
