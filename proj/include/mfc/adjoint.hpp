#pragma once

#include "mfc/backward.hpp"
#include "mfc/forward.hpp"
#include "mfc/problem.hpp"
#include "mfc/regression.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mfc {

// Time derivative of the statistic vector of the law of X at node k,
// coordinate-wise mean of b phi' + sigma^2/2 phi''.
std::vector<double> m_prime_coords(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                   const ControlProcess& u, int k);

// Same for the law of Y, driven by the backward equation:
// mean of -g phi'(Y) + z^2/2 phi''(Y).
std::vector<double> n_prime_coords(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                   const BackwardSolution& backward, const ControlProcess& u,
                                   int k);

// H = f + p0 b + q0 sigma + lambda0 g + <p1, m'> + <lambda1, n'>. The two
// pairings treat m' and n' as independent arguments; partial derivatives of
// H in (x, y, z, u, m, n) therefore never differentiate through them.
double hamiltonian(const ProblemSpec& spec, const CoefArgs& args, double p0, double q0,
                   double lambda0, std::span<const double> p1, std::span<const double> lambda1,
                   std::span<const double> m_prime, std::span<const double> n_prime);

// All four adjoint processes along one simulated pipeline. Layouts:
// lambda0/p0/q0 are (K+1)*N like the state array; lambda1 is (K+1)*dim_n
// (deterministic); p1/q1 are (K+1)*dim_m*N with coordinate-major rows.
struct AdjointBundle {
    int particles = 0;
    int steps = 0;
    std::vector<double> lambda0;
    std::vector<double> lambda1;
    std::vector<double> p0, q0;
    std::vector<double> p1, q1;
    int p0_picard_iterations = 0;
    double p0_picard_residual = 0.0;

    double lambda0_at(int k, int i) const {
        return lambda0[static_cast<std::size_t>(k) * particles + i];
    }
    double p0_at(int k, int i) const { return p0[static_cast<std::size_t>(k) * particles + i]; }
    double q0_at(int k, int i) const { return q0[static_cast<std::size_t>(k) * particles + i]; }
    std::span<const double> lambda1_row(int k) const;
    double p1_at(int k, int j, int i) const {
        return p1[(static_cast<std::size_t>(k) * lambda1_dim_m + j) * particles + i];
    }
    double q1_at(int k, int j, int i) const {
        return q1[(static_cast<std::size_t>(k) * lambda1_dim_m + j) * particles + i];
    }
    int lambda1_dim_m = 0;  // number of m-statistic coordinates carried by p1/q1
    int lambda1_dim_n = 0;
};

// lambda0: forward equation from d_y phi, drifted by -d_yH and diffused by
// d_zH along the stored Brownian increments.
std::vector<double> solve_lambda0(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                  const BackwardSolution& backward, const ControlProcess& u);

// lambda1: deterministic forward equation per n-statistic coordinate,
// driver -E[grad_n H], started at grad_n phi.
std::vector<double> solve_lambda1(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                  const BackwardSolution& backward, const ControlProcess& u,
                                  std::span<const double> lambda0);

struct P0Solution {
    std::vector<double> p0, q0;
    int picard_iterations = 0;
    double picard_residual = 0.0;
};

// (p0, q0): backward regression solve with terminal d_x h + lambda0(T) and
// driver d_xH, Picard-iterated over the (p0, q0) self-dependence.
P0Solution solve_p0(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                    const BackwardSolution& backward, const ControlProcess& u,
                    std::span<const double> lambda0, const RegressionBasis& basis);

// (p1, q1): per-coordinate backward regression solve with terminal
// grad_m h and driver grad_m H (no self-dependence).
void solve_p1(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
              const BackwardSolution& backward, const ControlProcess& u,
              std::span<const double> lambda0, const P0Solution& p0q0,
              const RegressionBasis& basis, std::vector<double>& p1_out,
              std::vector<double>& q1_out);

AdjointBundle solve_adjoints(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                             const BackwardSolution& backward, const ControlProcess& u,
                             const RegressionBasis& basis, bool with_measure_adjoints = true);

// Everything one control evaluation produces.
struct Pipeline {
    ParticleEnsemble ensemble;
    BackwardSolution backward;
    AdjointBundle adjoints;
    double J = 0.0;
};

Pipeline solve_pipeline(const ProblemSpec& spec, const ControlProcess& u, const TimeGrid& grid,
                        int particles, std::uint64_t seed, const RegressionBasis& basis,
                        bool with_adjoints, bool with_measure_adjoints = false);

// d_uH = d_uf + p0 d_ub + q0 d_usigma + lambda0 d_ug, reduced per node:
// plain cross-sectional mean under trivial information, conditional
// regression on the state under full information.
struct ControlGradient {
    std::vector<double> per_node;      // size K+1, last entry zero
    std::vector<double> per_particle;  // (K+1)*N fitted values in Full mode, else empty
};

ControlGradient control_gradient(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                 const BackwardSolution& backward, const AdjointBundle& adjoints,
                                 const ControlProcess& u, const RegressionBasis& basis);

// J(u) = mean of h(X_T, m_T) + phi(Y_0, n_0) + sum_k f(...) dt.
double evaluate_J(const ProblemSpec& spec, const ControlProcess& u, const TimeGrid& grid,
                  int particles, std::uint64_t seed, const RegressionBasis& basis);

// Central-difference Gateaux derivative [J(u + rho d) - J(u - rho d)] / 2 rho
// with common random numbers on both evaluations.
double gateaux_dJ(const ProblemSpec& spec, const ControlProcess& u,
                  std::span<const double> direction, const TimeGrid& grid, int particles,
                  std::uint64_t seed, const RegressionBasis& basis, double rho = 1e-4);

struct OptimizerSettings {
    double step0 = 0.1;
    int max_iters = 200;
    double tol = 1e-3;  // sup-node gradient norm at convergence
    int max_halvings = 20;
};

struct OptimizationReport {
    ControlProcess control;
    std::vector<double> J_history;         // accepted iterates, starts at u0
    std::vector<double> grad_sup_history;
    double J = 0.0;
    double stationarity_residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Projected gradient on open-loop controls with a backtracking line search.
// Minimizes or maximizes according to spec.sense. Non-convergence is
// reported through the flag, not an exception.
OptimizationReport optimize(const ProblemSpec& spec, const ControlProcess& u0,
                            const TimeGrid& grid, int particles, std::uint64_t seed,
                            const OptimizerSettings& settings, const RegressionBasis& basis);

struct DualityTerm {
    double residual = 0.0;  // mean of the pathwise identity defect
    double stderr_ = 0.0;   // cross-sectional standard error of that mean
    double scale = 0.0;     // mean magnitude of the identity's constituents
};

struct DualityReport {
    std::array<DualityTerm, 4> terms;  // p0 vs dX, p1 vs dM, lambda0 vs dY, lambda1 vs dN
};

// Ito-product identities between adjoints at u_ref and the solution
// differences produced by u_alt on common noise. Exact in continuous time;
// discretely they decay like dt plus Monte Carlo noise.
DualityReport duality_residuals(const ProblemSpec& spec, const ControlProcess& u_ref,
                                const ControlProcess& u_alt, const TimeGrid& grid,
                                int particles, std::uint64_t seed,
                                const RegressionBasis& basis);

}  // namespace mfc
