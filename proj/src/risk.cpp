#include "mfc/risk.hpp"

#include <cmath>
#include <stdexcept>

#include "mfc/problem.hpp"

namespace mfc {

namespace {

// Cumulative trapezoid of `rate` at every grid node.
std::vector<double> rate_integral_path(const std::function<double(double)>& rate,
                                       const TimeGrid& grid) {
    std::vector<double> acc(static_cast<std::size_t>(grid.nodes()), 0.0);
    const double dt = grid.dt();
    for (int k = 1; k <= grid.steps; ++k)
        acc[static_cast<std::size_t>(k)] =
            acc[static_cast<std::size_t>(k - 1)] +
            0.5 * dt * (rate(grid.node(k - 1)) + rate(grid.node(k)));
    return acc;
}

ProblemSpec shim_spec(const RiskDriverSpec& driver) {
    ProblemSpec spec;
    spec.name = "risk-bsde";
    spec.b = [](const CoefArgs&) { return 0.0; };
    spec.sigma = [](const CoefArgs&) { return 0.0; };
    spec.g = [driver](const CoefArgs& a) {
        return -driver.r(a.t) * a.y - driver.r_prime(a.t) * a.n_stats[0] + driver.F(a.t, a.z);
    };
    spec.f = [](const CoefArgs&) { return 0.0; };
    spec.h = [](const CoefArgs&) { return 0.0; };
    spec.phi = [](const CoefArgs&) { return 0.0; };
    spec.basis_m = StatisticBasis::monomials(1);
    spec.basis_n = StatisticBasis::monomials(1);
    spec.control_set = ControlSet{};
    return spec;
}

}  // namespace

double rate_integral(const std::function<double(double)>& rate, const TimeGrid& grid, int node) {
    if (node < 0 || node > grid.steps)
        throw std::invalid_argument("rate_integral: node outside the grid");
    const auto path = rate_integral_path(rate, grid);
    return path[static_cast<std::size_t>(node)];
}

RiskQuote risk(const RiskDriverSpec& driver, const std::function<double(double)>& terminal,
               const ParticleEnsemble& ensemble, const TimeGrid& grid,
               const RegressionBasis& basis) {
    if (ensemble.grid.steps != grid.steps ||
        std::abs(ensemble.grid.horizon - grid.horizon) > 1e-12 * (1.0 + grid.horizon))
        throw std::invalid_argument("risk: ensemble grid does not match the requested grid");
    if (!terminal) throw std::invalid_argument("risk: terminal payoff rule is empty");

    const int n = ensemble.particles;
    std::vector<double> xi(static_cast<std::size_t>(n));
    double second_moment = 0.0;
    const auto xT = ensemble.state_row(grid.steps);
    for (int i = 0; i < n; ++i) {
        xi[static_cast<std::size_t>(i)] = terminal(xT[i]);
        second_moment += xi[static_cast<std::size_t>(i)] * xi[static_cast<std::size_t>(i)];
    }
    second_moment /= n;
    if (!std::isfinite(second_moment))
        throw std::invalid_argument("risk: terminal payoff has a non-finite second moment");

    const ProblemSpec spec = shim_spec(driver);
    const ControlProcess u = ControlProcess::constant(grid, 0.0);
    RiskQuote quote;
    quote.solution = solve_backward_with_terminal(spec, ensemble, u, basis, xi);

    quote.phi_path.resize(static_cast<std::size_t>(grid.nodes()));
    quote.mean_y.resize(static_cast<std::size_t>(grid.nodes()));
    for (int k = 0; k <= grid.steps; ++k) {
        const double m = mean_of(quote.solution.y_row(k));
        quote.mean_y[static_cast<std::size_t>(k)] = m;
        quote.phi_path[static_cast<std::size_t>(k)] = -m;
    }
    quote.phi0 = quote.phi_path[0];

    const auto combined = rate_integral_path(
        [&driver](double t) { return driver.r(t) + driver.r_prime(t); }, grid);
    quote.mc_stderr = stderr_of_mean(xi) * std::exp(-combined.back());
    return quote;
}

DiscountedDriver discounted_driver(const RiskDriverSpec& driver, const TimeGrid& grid) {
    DiscountedDriver out;
    const auto combined = rate_integral_path(
        [&driver](double t) { return driver.r(t) + driver.r_prime(t); }, grid);
    out.discount.resize(combined.size());
    for (std::size_t k = 0; k < combined.size(); ++k) out.discount[k] = std::exp(-combined[k]);

    // Piecewise-linear interpolation of the cumulative integral keeps D(t)
    // exact at the grid nodes and positive in between.
    const TimeGrid g = grid;
    auto discount_at = [g, combined](double t) {
        const double dt = g.dt();
        const double pos = std::min(std::max(t / dt, 0.0), static_cast<double>(g.steps));
        const int k = std::min(static_cast<int>(pos), g.steps - 1);
        const double w = pos - k;
        const double c = (1.0 - w) * combined[static_cast<std::size_t>(k)] +
                         w * combined[static_cast<std::size_t>(k + 1)];
        return std::exp(-c);
    };

    const auto base_F = driver.F;
    out.driver.r = [](double) { return 0.0; };
    out.driver.r_prime = [](double) { return 0.0; };
    out.driver.F = [base_F, discount_at](double t, double z) {
        const double d = discount_at(t);
        return d * base_F(t, d * z);
    };
    return out;
}

double translation_invariance_check(const RiskDriverSpec& driver,
                                    const std::function<double(double)>& terminal, double a,
                                    const ParticleEnsemble& ensemble, const TimeGrid& grid,
                                    const RegressionBasis& basis) {
    const double growth = std::exp(rate_integral(
        [&driver](double t) { return driver.r(t) + driver.r_prime(t); }, grid, grid.steps));
    const RiskQuote base = risk(driver, terminal, ensemble, grid, basis);
    const auto shifted = [terminal, a, growth](double x) { return terminal(x) + a * growth; };
    const RiskQuote moved = risk(driver, shifted, ensemble, grid, basis);
    return std::abs(moved.phi0 - (base.phi0 - a));
}

}  // namespace mfc
