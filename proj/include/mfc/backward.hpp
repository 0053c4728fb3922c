#pragma once

#include "mfc/forward.hpp"
#include "mfc/problem.hpp"
#include "mfc/regression.hpp"

#include <span>
#include <vector>

namespace mfc {

struct BackwardSolution {
    int particles = 0;
    int steps = 0;
    std::vector<double> y;  // (K+1) * N
    std::vector<double> z;  // (K+1) * N, row K copies row K-1
    std::vector<std::vector<double>> n_stats;  // per node, one entry per basis_n function
    int picard_iterations = 0;
    double picard_residual = 0.0;
    std::vector<double> picard_history;

    std::span<const double> y_row(int k) const;
    std::span<const double> z_row(int k) const;
    double y_at(int k, int i) const { return y[static_cast<std::size_t>(k) * particles + i]; }
    double z_at(int k, int i) const { return z[static_cast<std::size_t>(k) * particles + i]; }
};

// Solves the coupled equation with terminal condition Y(T) = X(T): explicit
// backward Euler, per-step polynomial regression for the conditional
// expectations, and an outer Picard iteration over the statistics of the
// law of Y entering the driver.
BackwardSolution solve_backward(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                const ControlProcess& u, const RegressionBasis& basis);

// Same solver with an arbitrary square-integrable terminal value per path.
BackwardSolution solve_backward_with_terminal(const ProblemSpec& spec,
                                              const ParticleEnsemble& ensemble,
                                              const ControlProcess& u,
                                              const RegressionBasis& basis,
                                              std::span<const double> terminal);

struct MartingaleReport {
    std::vector<double> node_mean;    // mean of Y(t_{k+1}) - Y(t_k) + g dt per step
    std::vector<double> node_stderr;
    double max_abs = 0.0;
    double max_sigma_ratio = 0.0;     // |mean| / stderr at the worst step
};

MartingaleReport martingale_residual(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                     const ControlProcess& u, const BackwardSolution& sol);

}  // namespace mfc
