#pragma once

#include "mfc/grid.hpp"
#include "mfc/measure.hpp"
#include "mfc/problem.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mfc {

// Interacting particle system on a uniform grid. states holds (K+1) rows of
// N values, increments the K rows of Brownian steps that produced them.
struct ParticleEnsemble {
    int particles = 0;
    TimeGrid grid;
    std::uint64_t seed = 0;
    std::vector<double> states;      // (K+1) * N, row k = states at t_k
    std::vector<double> increments;  // K * N, row k = B(t_{k+1}) - B(t_k)

    std::span<const double> state_row(int k) const;
    std::span<const double> increment_row(int k) const;
    double state(int k, int i) const { return states[static_cast<std::size_t>(k) * particles + i]; }
    double increment(int k, int i) const {
        return increments[static_cast<std::size_t>(k) * particles + i];
    }
};

// One empirical measure per grid node, equal atom weights.
struct MeasureFlow {
    std::vector<EmpiricalMeasure> measures;

    const EmpiricalMeasure& at(int k) const { return measures.at(static_cast<std::size_t>(k)); }
    int nodes() const { return static_cast<int>(measures.size()); }
};

struct ForwardResult {
    ParticleEnsemble ensemble;
    MeasureFlow flow;
};

// Euler-Maruyama for dX = b(t, X, m, u) dt + sigma(t, X, m, u) dB with m the
// empirical measure of the ensemble itself. Controls are projected onto the
// admissible set before every coefficient call. Throws std::runtime_error
// naming the step index if a state turns non-finite.
ParticleEnsemble simulate_ensemble(const ProblemSpec& spec, const ControlProcess& u,
                                   const TimeGrid& grid, int particles, std::uint64_t seed);

ForwardResult simulate_forward(const ProblemSpec& spec, const ControlProcess& u,
                               const TimeGrid& grid, int particles, std::uint64_t seed);

MeasureFlow measure_flow(const ParticleEnsemble& ensemble);

// Per-node statistic path of the ensemble under the given basis,
// flattened row-major: stats[k * basis.size() + j].
std::vector<double> statistic_path(const ParticleEnsemble& ensemble,
                                   const StatisticBasis& basis);

struct LipschitzReport {
    std::vector<double> step_ratios;  // distance^2(mu_{k+1}, mu_k) / dt per step
    double max_ratio = 0.0;
};

// Empirical time-regularity of the measure flow in the weighted Fourier
// metric; finite and stable under grid refinement for Lipschitz coefficients.
LipschitzReport measure_flow_lipschitz_report(const MeasureFlow& flow, const TimeGrid& grid);

}  // namespace mfc
