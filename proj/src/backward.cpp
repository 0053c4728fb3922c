#include "mfc/backward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfc {

std::span<const double> BackwardSolution::y_row(int k) const {
    if (k < 0 || k > steps) throw std::out_of_range("BackwardSolution: y row");
    return {y.data() + static_cast<std::size_t>(k) * particles,
            static_cast<std::size_t>(particles)};
}

std::span<const double> BackwardSolution::z_row(int k) const {
    if (k < 0 || k > steps) throw std::out_of_range("BackwardSolution: z row");
    return {z.data() + static_cast<std::size_t>(k) * particles,
            static_cast<std::size_t>(particles)};
}

namespace {

constexpr int kMaxPicard = 50;
constexpr double kPicardTol = 1e-8;

double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace

BackwardSolution solve_backward_with_terminal(const ProblemSpec& spec,
                                              const ParticleEnsemble& ensemble,
                                              const ControlProcess& u,
                                              const RegressionBasis& basis,
                                              std::span<const double> terminal) {
    const int n = ensemble.particles;
    const int steps = ensemble.grid.steps;
    if (static_cast<int>(terminal.size()) != n)
        throw std::invalid_argument("solve_backward: terminal length mismatch");
    for (double v : terminal)
        if (!std::isfinite(v))
            throw std::invalid_argument("solve_backward: non-finite terminal value");

    const TimeGrid& grid = ensemble.grid;
    const double dt = grid.dt();
    const std::size_t dn = spec.basis_n.size();
    const auto nn = static_cast<std::size_t>(n);

    BackwardSolution sol;
    sol.particles = n;
    sol.steps = steps;
    sol.y.assign(static_cast<std::size_t>(grid.nodes()) * nn, 0.0);
    sol.z.assign(static_cast<std::size_t>(grid.nodes()) * nn, 0.0);

    // Statistic path of X, needed by the driver at every node.
    std::vector<std::vector<double>> m_stats(static_cast<std::size_t>(grid.nodes()));
    for (int k = 0; k <= steps; ++k)
        m_stats[static_cast<std::size_t>(k)] = statistics(ensemble.state_row(k), spec.basis_m);

    std::copy(terminal.begin(), terminal.end(),
              sol.y.begin() + static_cast<std::size_t>(steps) * nn);

    // Initial guess for the law-of-Y statistics: terminal statistics at
    // every node. The Picard loop replaces them with the solved flow.
    const std::vector<double> terminal_stats = statistics(terminal, spec.basis_n);
    std::vector<std::vector<double>> n_flow(static_cast<std::size_t>(grid.nodes()),
                                            terminal_stats);

    std::vector<double> y_prev_sweep;         // previous sweep, all nodes
    std::vector<double> mean_prev(static_cast<std::size_t>(grid.nodes()), 0.0);
    std::vector<double> targets(nn), zt(nn), cont(nn), zfit(nn);

    for (int sweep = 0; sweep < kMaxPicard; ++sweep) {
        const bool first = sweep == 0;
        if (!first) y_prev_sweep = sol.y;

        for (int k = steps - 1; k >= 0; --k) {
            const double t = grid.node(k);
            const auto xk = ensemble.state_row(k);
            const auto db = ensemble.increment_row(k);
            const double* ynext = sol.y.data() + (static_cast<std::size_t>(k) + 1) * nn;
            double* yk = sol.y.data() + static_cast<std::size_t>(k) * nn;
            double* zk = sol.z.data() + static_cast<std::size_t>(k) * nn;
            const StepRegression reg(xk, basis);

            cont = reg.fit(std::span<const double>(ynext, nn));

            // Z via regression of Y(t_{k+1}) dB / dt. Centering by the fitted
            // continuation and removing the (dB^2 - dt) fluctuation leave the
            // conditional expectation unchanged and cut the sample noise by
            // an order of sqrt(dt).
            for (int i = 0; i < n; ++i)
                zt[static_cast<std::size_t>(i)] =
                    (ynext[i] - cont[static_cast<std::size_t>(i)]) * db[i] / dt;
            zfit = reg.fit(zt);
            for (int i = 0; i < n; ++i)
                zt[static_cast<std::size_t>(i)] -= zfit[static_cast<std::size_t>(i)] *
                                                   (db[i] * db[i] - dt) / dt;
            const std::vector<double> zrow = reg.fit(zt);
            std::copy(zrow.begin(), zrow.end(), zk);

            const std::vector<double>& nk = n_flow[static_cast<std::size_t>(k)];
            const double* ystar =
                first ? cont.data() : y_prev_sweep.data() + static_cast<std::size_t>(k) * nn;

            for (int i = 0; i < n; ++i) {
                CoefArgs args;
                args.t = t;
                args.x = xk[i];
                args.y = ystar[i];
                args.z = zk[i];
                args.u = spec.control_set.project(u.value(grid, k, xk[i]));
                args.m_stats = m_stats[static_cast<std::size_t>(k)];
                args.n_stats = nk;
                targets[static_cast<std::size_t>(i)] =
                    ynext[i] + eval_coefficient(spec, Coefficient::G, args) * dt;
            }
            const std::vector<double> yrow = reg.fit(targets);
            std::copy(yrow.begin(), yrow.end(), yk);
        }
        std::copy(sol.z.begin() + static_cast<std::size_t>(steps - 1) * nn,
                  sol.z.begin() + static_cast<std::size_t>(steps) * nn,
                  sol.z.begin() + static_cast<std::size_t>(steps) * nn);

        // Refresh the law-of-Y statistics and measure the sweep change.
        double resid = 0.0;
        std::vector<double> mean_new(static_cast<std::size_t>(grid.nodes()));
        for (int k = 0; k <= steps; ++k) {
            const auto yk = sol.y_row(k);
            mean_new[static_cast<std::size_t>(k)] = mean_of(yk);
            if (dn > 0) {
                std::vector<double> ns = statistics(yk, spec.basis_n);
                resid = std::max(resid, sup_abs_diff(ns, n_flow[static_cast<std::size_t>(k)]));
                n_flow[static_cast<std::size_t>(k)] = std::move(ns);
            }
        }
        if (dn == 0) resid = sup_abs_diff(mean_new, mean_prev);
        mean_prev = std::move(mean_new);

        sol.picard_iterations = sweep + 1;
        sol.picard_residual = resid;
        sol.picard_history.push_back(resid);
        if (sweep > 0 && resid <= kPicardTol) break;
    }
    if (sol.picard_residual > kPicardTol)
        throw std::runtime_error("solve_backward: Picard iteration did not reach tolerance");

    sol.n_stats = std::move(n_flow);
    return sol;
}

BackwardSolution solve_backward(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                const ControlProcess& u, const RegressionBasis& basis) {
    return solve_backward_with_terminal(spec, ensemble, u, basis,
                                        ensemble.state_row(ensemble.grid.steps));
}

MartingaleReport martingale_residual(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                     const ControlProcess& u, const BackwardSolution& sol) {
    const int n = ensemble.particles;
    const int steps = ensemble.grid.steps;
    const TimeGrid& grid = ensemble.grid;
    const double dt = grid.dt();

    MartingaleReport report;
    report.node_mean.reserve(static_cast<std::size_t>(steps));
    report.node_stderr.reserve(static_cast<std::size_t>(steps));

    std::vector<double> incr(static_cast<std::size_t>(n));
    for (int k = 0; k < steps; ++k) {
        const double t = grid.node(k);
        const auto xk = ensemble.state_row(k);
        const std::vector<double> mk = statistics(xk, spec.basis_m);
        const auto& nk = sol.n_stats[static_cast<std::size_t>(k)];
        for (int i = 0; i < n; ++i) {
            CoefArgs args;
            args.t = t;
            args.x = xk[i];
            args.y = sol.y_at(k, i);
            args.z = sol.z_at(k, i);
            args.u = spec.control_set.project(u.value(grid, k, xk[i]));
            args.m_stats = mk;
            args.n_stats = nk;
            incr[static_cast<std::size_t>(i)] =
                sol.y_at(k + 1, i) - sol.y_at(k, i) +
                eval_coefficient(spec, Coefficient::G, args) * dt;
        }
        const double m = mean_of(incr);
        const double se = stderr_of_mean(incr);
        report.node_mean.push_back(m);
        report.node_stderr.push_back(se);
        if (std::abs(m) > report.max_abs) report.max_abs = std::abs(m);
        if (se > 0.0) report.max_sigma_ratio = std::max(report.max_sigma_ratio, std::abs(m) / se);
    }
    return report;
}

}  // namespace mfc
