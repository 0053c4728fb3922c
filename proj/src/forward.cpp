#include "mfc/forward.hpp"

#include "mfc/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mfc {

std::span<const double> ParticleEnsemble::state_row(int k) const {
    if (k < 0 || k > grid.steps) throw std::out_of_range("ParticleEnsemble: state row");
    return {states.data() + static_cast<std::size_t>(k) * particles,
            static_cast<std::size_t>(particles)};
}

std::span<const double> ParticleEnsemble::increment_row(int k) const {
    if (k < 0 || k >= grid.steps) throw std::out_of_range("ParticleEnsemble: increment row");
    return {increments.data() + static_cast<std::size_t>(k) * particles,
            static_cast<std::size_t>(particles)};
}

ParticleEnsemble simulate_ensemble(const ProblemSpec& spec, const ControlProcess& u,
                                   const TimeGrid& grid, int particles, std::uint64_t seed) {
    if (particles < 2)
        throw std::invalid_argument("simulate_ensemble: need at least two particles");

    ParticleEnsemble ens;
    ens.particles = particles;
    ens.grid = grid;
    ens.seed = seed;
    const auto n = static_cast<std::size_t>(particles);
    ens.states.assign(static_cast<std::size_t>(grid.nodes()) * n, spec.x0);
    ens.increments.resize(static_cast<std::size_t>(grid.steps) * n);

    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);

    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.node(k);
        const double* xk = ens.states.data() + static_cast<std::size_t>(k) * n;
        double* xnext = ens.states.data() + (static_cast<std::size_t>(k) + 1) * n;
        double* db = ens.increments.data() + static_cast<std::size_t>(k) * n;

        const std::vector<double> m_stats =
            statistics(std::span<const double>(xk, n), spec.basis_m);

        for (int i = 0; i < particles; ++i) {
            db[i] = sqrt_dt * rng::standard_normal(seed, static_cast<std::uint64_t>(i),
                                                   static_cast<std::uint64_t>(k));
            CoefArgs args;
            args.t = t;
            args.x = xk[i];
            args.u = spec.control_set.project(u.value(grid, k, xk[i]));
            args.m_stats = m_stats;
            double drift = 0.0, vol = 0.0;
            try {
                drift = eval_coefficient(spec, Coefficient::B, args);
                vol = eval_coefficient(spec, Coefficient::Sigma, args);
            } catch (const std::domain_error& e) {
                // Overflowing coefficients are a divergence of the scheme,
                // reported with the step index like a non-finite state.
                throw std::runtime_error("simulate_ensemble: dynamics diverged at step " +
                                         std::to_string(k + 1) + ": " + e.what());
            }
            xnext[i] = xk[i] + drift * dt + vol * db[i];
            if (!std::isfinite(xnext[i]))
                throw std::runtime_error("simulate_ensemble: non-finite state at step " +
                                         std::to_string(k + 1));
        }
    }
    return ens;
}

MeasureFlow measure_flow(const ParticleEnsemble& ensemble) {
    MeasureFlow flow;
    flow.measures.reserve(static_cast<std::size_t>(ensemble.grid.nodes()));
    for (int k = 0; k <= ensemble.grid.steps; ++k) {
        const auto row = ensemble.state_row(k);
        flow.measures.push_back(
            EmpiricalMeasure::equal_weights(std::vector<double>(row.begin(), row.end())));
    }
    return flow;
}

ForwardResult simulate_forward(const ProblemSpec& spec, const ControlProcess& u,
                               const TimeGrid& grid, int particles, std::uint64_t seed) {
    ForwardResult out;
    out.ensemble = simulate_ensemble(spec, u, grid, particles, seed);
    out.flow = measure_flow(out.ensemble);
    return out;
}

std::vector<double> statistic_path(const ParticleEnsemble& ensemble,
                                   const StatisticBasis& basis) {
    std::vector<double> path;
    path.reserve(static_cast<std::size_t>(ensemble.grid.nodes()) * basis.size());
    for (int k = 0; k <= ensemble.grid.steps; ++k) {
        const auto stats = statistics(ensemble.state_row(k), basis);
        path.insert(path.end(), stats.begin(), stats.end());
    }
    return path;
}

LipschitzReport measure_flow_lipschitz_report(const MeasureFlow& flow, const TimeGrid& grid) {
    if (flow.nodes() != grid.nodes())
        throw std::invalid_argument("measure_flow_lipschitz_report: flow/grid size mismatch");
    LipschitzReport report;
    report.step_ratios.reserve(static_cast<std::size_t>(grid.steps));
    const double dt = grid.dt();
    for (int k = 0; k < grid.steps; ++k) {
        const double d2 = distance_squared(flow.at(k + 1), flow.at(k));
        report.step_ratios.push_back(d2 / dt);
        report.max_ratio = std::max(report.max_ratio, d2 / dt);
    }
    return report;
}

}  // namespace mfc
