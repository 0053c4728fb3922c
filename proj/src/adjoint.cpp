#include "mfc/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfc {

namespace {

constexpr int kMaxPicard = 50;
constexpr double kPicardTol = 1e-8;

std::vector<std::vector<double>> m_stat_rows(const ProblemSpec& spec,
                                             const ParticleEnsemble& ensemble) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(ensemble.grid.nodes()));
    for (int k = 0; k <= ensemble.grid.steps; ++k)
        rows[static_cast<std::size_t>(k)] = statistics(ensemble.state_row(k), spec.basis_m);
    return rows;
}

CoefArgs node_args(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                   const BackwardSolution& backward, const ControlProcess& u,
                   const std::vector<std::vector<double>>& m_rows, int k, int i) {
    CoefArgs args;
    args.t = ensemble.grid.node(k);
    args.x = ensemble.state(k, i);
    args.y = backward.y_at(k, i);
    args.z = backward.z_at(k, i);
    args.u = spec.control_set.project(u.value(ensemble.grid, k, args.x));
    args.m_stats = m_rows[static_cast<std::size_t>(k)];
    args.n_stats = backward.n_stats[static_cast<std::size_t>(k)];
    return args;
}

}  // namespace

std::vector<double> m_prime_coords(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                   const ControlProcess& u, int k) {
    const auto xk = ensemble.state_row(k);
    const std::vector<double> mk = statistics(xk, spec.basis_m);
    const double t = ensemble.grid.node(k);
    std::vector<double> out(spec.basis_m.size(), 0.0);
    for (int i = 0; i < ensemble.particles; ++i) {
        CoefArgs args;
        args.t = t;
        args.x = xk[i];
        args.u = spec.control_set.project(u.value(ensemble.grid, k, xk[i]));
        args.m_stats = mk;
        const double b = eval_coefficient(spec, Coefficient::B, args);
        const double s = eval_coefficient(spec, Coefficient::Sigma, args);
        for (std::size_t j = 0; j < spec.basis_m.size(); ++j) {
            const auto& fn = spec.basis_m.at(j);
            out[j] += b * fn.df(args.x) + 0.5 * s * s * fn.d2f(args.x);
        }
    }
    for (double& v : out) v /= ensemble.particles;
    return out;
}

std::vector<double> n_prime_coords(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                   const BackwardSolution& backward, const ControlProcess& u,
                                   int k) {
    const auto m_rows = m_stat_rows(spec, ensemble);
    std::vector<double> out(spec.basis_n.size(), 0.0);
    for (int i = 0; i < ensemble.particles; ++i) {
        const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, k, i);
        const double g = eval_coefficient(spec, Coefficient::G, args);
        for (std::size_t j = 0; j < spec.basis_n.size(); ++j) {
            const auto& fn = spec.basis_n.at(j);
            out[j] += -g * fn.df(args.y) + 0.5 * args.z * args.z * fn.d2f(args.y);
        }
    }
    for (double& v : out) v /= ensemble.particles;
    return out;
}

double hamiltonian(const ProblemSpec& spec, const CoefArgs& args, double p0, double q0,
                   double lambda0, std::span<const double> p1, std::span<const double> lambda1,
                   std::span<const double> m_prime, std::span<const double> n_prime) {
    if (p1.size() != m_prime.size())
        throw std::invalid_argument("hamiltonian: p1 / m' dimension mismatch");
    if (lambda1.size() != n_prime.size())
        throw std::invalid_argument("hamiltonian: lambda1 / n' dimension mismatch");
    double acc = eval_coefficient(spec, Coefficient::F, args) +
                 p0 * eval_coefficient(spec, Coefficient::B, args) +
                 q0 * eval_coefficient(spec, Coefficient::Sigma, args) +
                 lambda0 * eval_coefficient(spec, Coefficient::G, args);
    for (std::size_t j = 0; j < p1.size(); ++j) acc += p1[j] * m_prime[j];
    for (std::size_t j = 0; j < lambda1.size(); ++j) acc += lambda1[j] * n_prime[j];
    return acc;
}

std::span<const double> AdjointBundle::lambda1_row(int k) const {
    return {lambda1.data() + static_cast<std::size_t>(k) * lambda1_dim_n,
            static_cast<std::size_t>(lambda1_dim_n)};
}

std::vector<double> solve_lambda0(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                  const BackwardSolution& backward, const ControlProcess& u) {
    const int n = ensemble.particles;
    const int steps = ensemble.grid.steps;
    const double dt = ensemble.grid.dt();
    const auto nn = static_cast<std::size_t>(n);
    const auto m_rows = m_stat_rows(spec, ensemble);

    std::vector<double> lam(static_cast<std::size_t>(ensemble.grid.nodes()) * nn, 0.0);
    for (int i = 0; i < n; ++i) {
        const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, 0, i);
        lam[static_cast<std::size_t>(i)] = eval_derivative(spec, Coefficient::Phi, Wrt::y(), args);
    }
    for (int k = 0; k < steps; ++k) {
        const auto db = ensemble.increment_row(k);
        const double* cur = lam.data() + static_cast<std::size_t>(k) * nn;
        double* next = lam.data() + (static_cast<std::size_t>(k) + 1) * nn;
        for (int i = 0; i < n; ++i) {
            const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, k, i);
            const double dy = eval_derivative(spec, Coefficient::F, Wrt::y(), args) +
                              cur[i] * eval_derivative(spec, Coefficient::G, Wrt::y(), args);
            const double dz = eval_derivative(spec, Coefficient::F, Wrt::z(), args) +
                              cur[i] * eval_derivative(spec, Coefficient::G, Wrt::z(), args);
            next[i] = cur[i] - dy * dt + dz * db[i];
            if (!std::isfinite(next[i]))
                throw std::runtime_error("solve_lambda0: non-finite value at step " +
                                         std::to_string(k + 1));
        }
    }
    return lam;
}

std::vector<double> solve_lambda1(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                  const BackwardSolution& backward, const ControlProcess& u,
                                  std::span<const double> lambda0) {
    const int n = ensemble.particles;
    const int steps = ensemble.grid.steps;
    const double dt = ensemble.grid.dt();
    const std::size_t dn = spec.basis_n.size();
    const auto m_rows = m_stat_rows(spec, ensemble);

    std::vector<double> lam(static_cast<std::size_t>(ensemble.grid.nodes()) * dn, 0.0);
    for (std::size_t j = 0; j < dn; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, 0, i);
            acc += eval_derivative(spec, Coefficient::Phi, Wrt::n(static_cast<int>(j)), args);
        }
        lam[j] = acc / n;
    }
    for (int k = 0; k < steps; ++k) {
        const double* cur = lam.data() + static_cast<std::size_t>(k) * dn;
        double* next = lam.data() + (static_cast<std::size_t>(k) + 1) * dn;
        for (std::size_t j = 0; j < dn; ++j) {
            double drive = 0.0;
            for (int i = 0; i < n; ++i) {
                const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, k, i);
                drive += eval_derivative(spec, Coefficient::F, Wrt::n(static_cast<int>(j)), args) +
                         lambda0[static_cast<std::size_t>(k) * n + i] *
                             eval_derivative(spec, Coefficient::G, Wrt::n(static_cast<int>(j)),
                                             args);
            }
            next[j] = cur[j] - dt * drive / n;
        }
    }
    return lam;
}

P0Solution solve_p0(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                    const BackwardSolution& backward, const ControlProcess& u,
                    std::span<const double> lambda0, const RegressionBasis& basis) {
    const int n = ensemble.particles;
    const int steps = ensemble.grid.steps;
    const double dt = ensemble.grid.dt();
    const auto nn = static_cast<std::size_t>(n);
    const auto m_rows = m_stat_rows(spec, ensemble);

    P0Solution sol;
    sol.p0.assign(static_cast<std::size_t>(ensemble.grid.nodes()) * nn, 0.0);
    sol.q0.assign(static_cast<std::size_t>(ensemble.grid.nodes()) * nn, 0.0);

    // Terminal value d_x h(X_T, m_T) + lambda0(T), kept pathwise.
    {
        double* pT = sol.p0.data() + static_cast<std::size_t>(steps) * nn;
        for (int i = 0; i < n; ++i) {
            const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, steps, i);
            pT[i] = eval_derivative(spec, Coefficient::H, Wrt::x(), args) +
                    lambda0[static_cast<std::size_t>(steps) * nn + i];
        }
    }

    std::vector<double> p_prev_sweep;
    std::vector<double> targets(nn), qt(nn), cont(nn), qfit(nn);

    for (int sweep = 0; sweep < kMaxPicard; ++sweep) {
        const bool first = sweep == 0;
        if (!first) p_prev_sweep = sol.p0;

        for (int k = steps - 1; k >= 0; --k) {
            const auto xk = ensemble.state_row(k);
            const auto db = ensemble.increment_row(k);
            const double* pnext = sol.p0.data() + (static_cast<std::size_t>(k) + 1) * nn;
            double* pk = sol.p0.data() + static_cast<std::size_t>(k) * nn;
            double* qk = sol.q0.data() + static_cast<std::size_t>(k) * nn;
            const StepRegression reg(xk, basis);

            cont = reg.fit(std::span<const double>(pnext, nn));
            for (int i = 0; i < n; ++i)
                qt[static_cast<std::size_t>(i)] =
                    (pnext[i] - cont[static_cast<std::size_t>(i)]) * db[i] / dt;
            qfit = reg.fit(qt);
            for (int i = 0; i < n; ++i)
                qt[static_cast<std::size_t>(i)] -= qfit[static_cast<std::size_t>(i)] *
                                                   (db[i] * db[i] - dt) / dt;
            const std::vector<double> qrow = reg.fit(qt);
            std::copy(qrow.begin(), qrow.end(), qk);

            const double* pstar =
                first ? cont.data() : p_prev_sweep.data() + static_cast<std::size_t>(k) * nn;
            for (int i = 0; i < n; ++i) {
                const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, k, i);
                const double drive =
                    eval_derivative(spec, Coefficient::F, Wrt::x(), args) +
                    pstar[i] * eval_derivative(spec, Coefficient::B, Wrt::x(), args) +
                    qk[i] * eval_derivative(spec, Coefficient::Sigma, Wrt::x(), args) +
                    lambda0[static_cast<std::size_t>(k) * nn + i] *
                        eval_derivative(spec, Coefficient::G, Wrt::x(), args);
                targets[static_cast<std::size_t>(i)] = pnext[i] + drive * dt;
            }
            const std::vector<double> prow = reg.fit(targets);
            std::copy(prow.begin(), prow.end(), pk);
        }
        std::copy(sol.q0.begin() + static_cast<std::size_t>(steps - 1) * nn,
                  sol.q0.begin() + static_cast<std::size_t>(steps) * nn,
                  sol.q0.begin() + static_cast<std::size_t>(steps) * nn);

        sol.picard_iterations = sweep + 1;
        if (!first) {
            double resid = 0.0;
            for (int k = 0; k <= steps; ++k) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i)
                    acc += std::abs(sol.p0[static_cast<std::size_t>(k) * nn + i] -
                                    p_prev_sweep[static_cast<std::size_t>(k) * nn + i]);
                resid = std::max(resid, acc / n);
            }
            sol.picard_residual = resid;
            if (resid <= kPicardTol) return sol;
        }
    }
    throw std::runtime_error("solve_p0: Picard iteration did not reach tolerance");
}

void solve_p1(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
              const BackwardSolution& backward, const ControlProcess& u,
              std::span<const double> lambda0, const P0Solution& p0q0,
              const RegressionBasis& basis, std::vector<double>& p1_out,
              std::vector<double>& q1_out) {
    const int n = ensemble.particles;
    const int steps = ensemble.grid.steps;
    const double dt = ensemble.grid.dt();
    const auto nn = static_cast<std::size_t>(n);
    const std::size_t dm = spec.basis_m.size();
    const auto m_rows = m_stat_rows(spec, ensemble);

    p1_out.assign(static_cast<std::size_t>(ensemble.grid.nodes()) * dm * nn, 0.0);
    q1_out.assign(static_cast<std::size_t>(ensemble.grid.nodes()) * dm * nn, 0.0);
    auto row = [&](std::vector<double>& v, int k, std::size_t j) {
        return v.data() + (static_cast<std::size_t>(k) * dm + j) * nn;
    };

    for (std::size_t j = 0; j < dm; ++j) {
        double* pT = row(p1_out, steps, j);
        for (int i = 0; i < n; ++i) {
            const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, steps, i);
            pT[i] = eval_derivative(spec, Coefficient::H, Wrt::m(static_cast<int>(j)), args);
        }
    }

    std::vector<double> targets(nn), qt(nn), cont(nn), qfit(nn);
    for (int k = steps - 1; k >= 0; --k) {
        const auto xk = ensemble.state_row(k);
        const auto db = ensemble.increment_row(k);
        const StepRegression reg(xk, basis);
        for (std::size_t j = 0; j < dm; ++j) {
            const double* pnext = row(p1_out, k + 1, j);
            double* pk = row(p1_out, k, j);
            double* qk = row(q1_out, k, j);

            cont = reg.fit(std::span<const double>(pnext, nn));
            for (int i = 0; i < n; ++i)
                qt[static_cast<std::size_t>(i)] =
                    (pnext[i] - cont[static_cast<std::size_t>(i)]) * db[i] / dt;
            qfit = reg.fit(qt);
            for (int i = 0; i < n; ++i)
                qt[static_cast<std::size_t>(i)] -= qfit[static_cast<std::size_t>(i)] *
                                                   (db[i] * db[i] - dt) / dt;
            const std::vector<double> qrow = reg.fit(qt);
            std::copy(qrow.begin(), qrow.end(), qk);

            const Wrt wrt = Wrt::m(static_cast<int>(j));
            for (int i = 0; i < n; ++i) {
                const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, k, i);
                const double drive =
                    eval_derivative(spec, Coefficient::F, wrt, args) +
                    p0q0.p0[static_cast<std::size_t>(k) * nn + i] *
                        eval_derivative(spec, Coefficient::B, wrt, args) +
                    p0q0.q0[static_cast<std::size_t>(k) * nn + i] *
                        eval_derivative(spec, Coefficient::Sigma, wrt, args) +
                    lambda0[static_cast<std::size_t>(k) * nn + i] *
                        eval_derivative(spec, Coefficient::G, wrt, args);
                targets[static_cast<std::size_t>(i)] = pnext[i] + drive * dt;
            }
            const std::vector<double> prow = reg.fit(targets);
            std::copy(prow.begin(), prow.end(), pk);
        }
    }
    for (std::size_t j = 0; j < dm; ++j) {
        std::copy(row(q1_out, steps - 1, j), row(q1_out, steps - 1, j) + nn,
                  row(q1_out, steps, j));
    }
}

AdjointBundle solve_adjoints(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                             const BackwardSolution& backward, const ControlProcess& u,
                             const RegressionBasis& basis, bool with_measure_adjoints) {
    AdjointBundle bundle;
    bundle.particles = ensemble.particles;
    bundle.steps = ensemble.grid.steps;
    bundle.lambda1_dim_m = static_cast<int>(spec.basis_m.size());
    bundle.lambda1_dim_n = static_cast<int>(spec.basis_n.size());

    bundle.lambda0 = solve_lambda0(spec, ensemble, backward, u);
    P0Solution p0q0 = solve_p0(spec, ensemble, backward, u, bundle.lambda0, basis);
    bundle.p0_picard_iterations = p0q0.picard_iterations;
    bundle.p0_picard_residual = p0q0.picard_residual;
    if (with_measure_adjoints) {
        bundle.lambda1 = solve_lambda1(spec, ensemble, backward, u, bundle.lambda0);
        solve_p1(spec, ensemble, backward, u, bundle.lambda0, p0q0, basis, bundle.p1,
                 bundle.q1);
    }
    bundle.p0 = std::move(p0q0.p0);
    bundle.q0 = std::move(p0q0.q0);
    return bundle;
}

ControlGradient control_gradient(const ProblemSpec& spec, const ParticleEnsemble& ensemble,
                                 const BackwardSolution& backward, const AdjointBundle& adjoints,
                                 const ControlProcess& u, const RegressionBasis& basis) {
    const int n = ensemble.particles;
    const int steps = ensemble.grid.steps;
    const auto nn = static_cast<std::size_t>(n);
    const auto m_rows = m_stat_rows(spec, ensemble);
    const bool full = spec.info == InformationMode::Full;

    ControlGradient grad;
    grad.per_node.assign(static_cast<std::size_t>(ensemble.grid.nodes()), 0.0);
    if (full) grad.per_particle.assign(static_cast<std::size_t>(ensemble.grid.nodes()) * nn, 0.0);

    std::vector<double> duh(nn);
    for (int k = 0; k < steps; ++k) {
        for (int i = 0; i < n; ++i) {
            const CoefArgs args = node_args(spec, ensemble, backward, u, m_rows, k, i);
            duh[static_cast<std::size_t>(i)] =
                eval_derivative(spec, Coefficient::F, Wrt::u(), args) +
                adjoints.p0_at(k, i) * eval_derivative(spec, Coefficient::B, Wrt::u(), args) +
                adjoints.q0_at(k, i) * eval_derivative(spec, Coefficient::Sigma, Wrt::u(), args) +
                adjoints.lambda0_at(k, i) * eval_derivative(spec, Coefficient::G, Wrt::u(), args);
        }
        grad.per_node[static_cast<std::size_t>(k)] = mean_of(duh);
        if (full) {
            const StepRegression reg(ensemble.state_row(k), basis);
            const std::vector<double> fitted = reg.fit(duh);
            std::copy(fitted.begin(), fitted.end(),
                      grad.per_particle.begin() + static_cast<std::size_t>(k) * nn);
        }
    }
    return grad;
}

double evaluate_J(const ProblemSpec& spec, const ControlProcess& u, const TimeGrid& grid,
                  int particles, std::uint64_t seed, const RegressionBasis& basis) {
    const ParticleEnsemble ens = simulate_ensemble(spec, u, grid, particles, seed);
    const BackwardSolution backward = solve_backward(spec, ens, u, basis);
    const auto m_rows = m_stat_rows(spec, ens);
    const double dt = grid.dt();
    const int n = particles;

    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        CoefArgs terminal;
        terminal.t = grid.horizon;
        terminal.x = ens.state(grid.steps, i);
        terminal.m_stats = m_rows[static_cast<std::size_t>(grid.steps)];
        double ji = eval_coefficient(spec, Coefficient::H, terminal);

        CoefArgs initial;
        initial.t = 0.0;
        initial.x = ens.state(0, i);
        initial.y = backward.y_at(0, i);
        initial.n_stats = backward.n_stats[0];
        initial.m_stats = m_rows[0];
        ji += eval_coefficient(spec, Coefficient::Phi, initial);

        for (int k = 0; k < grid.steps; ++k) {
            const CoefArgs args = node_args(spec, ens, backward, u, m_rows, k, i);
            ji += eval_coefficient(spec, Coefficient::F, args) * dt;
        }
        acc += ji;
    }
    return acc / n;
}

Pipeline solve_pipeline(const ProblemSpec& spec, const ControlProcess& u, const TimeGrid& grid,
                        int particles, std::uint64_t seed, const RegressionBasis& basis,
                        bool with_adjoints, bool with_measure_adjoints) {
    Pipeline pipe;
    pipe.ensemble = simulate_ensemble(spec, u, grid, particles, seed);
    pipe.backward = solve_backward(spec, pipe.ensemble, u, basis);
    if (with_adjoints)
        pipe.adjoints = solve_adjoints(spec, pipe.ensemble, pipe.backward, u, basis,
                                       with_measure_adjoints);

    const auto m_rows = m_stat_rows(spec, pipe.ensemble);
    const double dt = grid.dt();
    double acc = 0.0;
    for (int i = 0; i < particles; ++i) {
        CoefArgs terminal;
        terminal.t = grid.horizon;
        terminal.x = pipe.ensemble.state(grid.steps, i);
        terminal.m_stats = m_rows[static_cast<std::size_t>(grid.steps)];
        double ji = eval_coefficient(spec, Coefficient::H, terminal);
        CoefArgs initial;
        initial.t = 0.0;
        initial.x = pipe.ensemble.state(0, i);
        initial.y = pipe.backward.y_at(0, i);
        initial.n_stats = pipe.backward.n_stats[0];
        initial.m_stats = m_rows[0];
        ji += eval_coefficient(spec, Coefficient::Phi, initial);
        for (int k = 0; k < grid.steps; ++k) {
            const CoefArgs args = node_args(spec, pipe.ensemble, pipe.backward, u, m_rows, k, i);
            ji += eval_coefficient(spec, Coefficient::F, args) * dt;
        }
        acc += ji;
    }
    pipe.J = acc / particles;
    return pipe;
}

double gateaux_dJ(const ProblemSpec& spec, const ControlProcess& u,
                  std::span<const double> direction, const TimeGrid& grid, int particles,
                  std::uint64_t seed, const RegressionBasis& basis, double rho) {
    if (u.mode != InformationMode::Trivial)
        throw std::invalid_argument("gateaux_dJ: open-loop controls only");
    if (direction.size() != u.open_loop.size())
        throw std::invalid_argument("gateaux_dJ: direction length mismatch");
    if (!(rho > 0.0)) throw std::invalid_argument("gateaux_dJ: rho must be positive");

    ControlProcess up = u, um = u;
    for (std::size_t k = 0; k < direction.size(); ++k) {
        up.open_loop[k] = spec.control_set.project(u.open_loop[k] + rho * direction[k]);
        um.open_loop[k] = spec.control_set.project(u.open_loop[k] - rho * direction[k]);
    }
    const double jp = evaluate_J(spec, up, grid, particles, seed, basis);
    const double jm = evaluate_J(spec, um, grid, particles, seed, basis);
    return (jp - jm) / (2.0 * rho);
}

OptimizationReport optimize(const ProblemSpec& spec, const ControlProcess& u0,
                            const TimeGrid& grid, int particles, std::uint64_t seed,
                            const OptimizerSettings& settings, const RegressionBasis& basis) {
    if (u0.mode != InformationMode::Trivial)
        throw std::invalid_argument("optimize: open-loop controls only");
    if (static_cast<int>(u0.open_loop.size()) != grid.nodes())
        throw std::invalid_argument("optimize: control table must have one value per node");

    OptimizationReport report;
    ControlProcess u = u0;
    for (double& v : u.open_loop) v = spec.control_set.project(v);

    Pipeline pipe = solve_pipeline(spec, u, grid, particles, seed, basis, true);
    report.J_history.push_back(pipe.J);
    const double sense = spec.sense == OptimizeSense::Maximize ? 1.0 : -1.0;
    double step = settings.step0;

    while (true) {
        const ControlGradient grad =
            control_gradient(spec, pipe.ensemble, pipe.backward, pipe.adjoints, u, basis);
        double gsup = 0.0;
        for (double gv : grad.per_node) gsup = std::max(gsup, std::abs(gv));
        report.grad_sup_history.push_back(gsup);
        report.stationarity_residual = gsup;
        if (gsup < settings.tol) {
            report.converged = true;
            break;
        }
        if (report.iterations >= settings.max_iters) break;

        // Backtracking line search; the step doubles after a first-try
        // acceptance so flat landscapes do not crawl.
        bool accepted = false;
        ControlProcess cand = u;
        for (int halving = 0; halving <= settings.max_halvings; ++halving) {
            for (int k = 0; k < grid.nodes(); ++k)
                cand.open_loop[static_cast<std::size_t>(k)] = spec.control_set.project(
                    u.open_loop[static_cast<std::size_t>(k)] +
                    sense * step * grad.per_node[static_cast<std::size_t>(k)]);
            double j_cand;
            try {
                j_cand = evaluate_J(spec, cand, grid, particles, seed, basis);
            } catch (const std::exception&) {
                step *= 0.5;  // treat a blown-up candidate as a rejected step
                continue;
            }
            const bool improved =
                spec.sense == OptimizeSense::Maximize ? j_cand > pipe.J : j_cand < pipe.J;
            if (improved) {
                accepted = true;
                if (halving == 0) step = std::min(step * 2.0, settings.step0 * 1048576.0);
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        u = cand;
        pipe = solve_pipeline(spec, u, grid, particles, seed, basis, true);
        report.J_history.push_back(pipe.J);
        report.iterations += 1;
    }

    report.control = u;
    report.J = pipe.J;
    return report;
}

namespace {

struct PipelineView {
    const Pipeline* pipe = nullptr;
    std::vector<std::vector<double>> m_rows;
    std::vector<std::vector<double>> m_prime;
    std::vector<std::vector<double>> n_prime;
};

PipelineView make_view(const ProblemSpec& spec, const Pipeline& pipe, const ControlProcess& u) {
    PipelineView view;
    view.pipe = &pipe;
    view.m_rows = m_stat_rows(spec, pipe.ensemble);
    const int steps = pipe.ensemble.grid.steps;
    view.m_prime.resize(static_cast<std::size_t>(steps));
    view.n_prime.resize(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        view.m_prime[static_cast<std::size_t>(k)] = m_prime_coords(spec, pipe.ensemble, u, k);
        view.n_prime[static_cast<std::size_t>(k)] =
            n_prime_coords(spec, pipe.ensemble, pipe.backward, u, k);
    }
    return view;
}

}  // namespace

DualityReport duality_residuals(const ProblemSpec& spec, const ControlProcess& u_ref,
                                const ControlProcess& u_alt, const TimeGrid& grid,
                                int particles, std::uint64_t seed,
                                const RegressionBasis& basis) {
    const Pipeline ref = solve_pipeline(spec, u_ref, grid, particles, seed, basis, true, true);
    const Pipeline alt = solve_pipeline(spec, u_alt, grid, particles, seed, basis, false);

    const PipelineView rv = make_view(spec, ref, u_ref);
    const PipelineView av = make_view(spec, alt, u_alt);

    const int n = particles;
    const int steps = grid.steps;
    const double dt = grid.dt();
    const std::size_t dm = spec.basis_m.size();
    const std::size_t dn = spec.basis_n.size();

    // Deterministic statistic gaps between the two pipelines.
    std::vector<std::vector<double>> dM(static_cast<std::size_t>(grid.nodes())),
        dN(static_cast<std::size_t>(grid.nodes()));
    for (int k = 0; k <= steps; ++k) {
        dM[static_cast<std::size_t>(k)].resize(dm);
        for (std::size_t j = 0; j < dm; ++j)
            dM[static_cast<std::size_t>(k)][j] = av.m_rows[static_cast<std::size_t>(k)][j] -
                                                 rv.m_rows[static_cast<std::size_t>(k)][j];
        dN[static_cast<std::size_t>(k)].resize(dn);
        for (std::size_t j = 0; j < dn; ++j)
            dN[static_cast<std::size_t>(k)][j] =
                alt.backward.n_stats[static_cast<std::size_t>(k)][j] -
                ref.backward.n_stats[static_cast<std::size_t>(k)][j];
    }

    // Mean grad_n H per node, matching the lambda1 dynamics.
    std::vector<std::vector<double>> gnH(static_cast<std::size_t>(steps),
                                         std::vector<double>(dn, 0.0));
    for (int k = 0; k < steps; ++k) {
        for (int i = 0; i < n; ++i) {
            const CoefArgs args =
                node_args(spec, ref.ensemble, ref.backward, u_ref, rv.m_rows, k, i);
            for (std::size_t j = 0; j < dn; ++j)
                gnH[static_cast<std::size_t>(k)][j] +=
                    eval_derivative(spec, Coefficient::F, Wrt::n(static_cast<int>(j)), args) +
                    ref.adjoints.lambda0_at(k, i) *
                        eval_derivative(spec, Coefficient::G, Wrt::n(static_cast<int>(j)), args);
        }
        for (std::size_t j = 0; j < dn; ++j) gnH[static_cast<std::size_t>(k)][j] /= n;
    }

    std::vector<double> r1(static_cast<std::size_t>(n)), r2(static_cast<std::size_t>(n)),
        r3(static_cast<std::size_t>(n)), r4(static_cast<std::size_t>(n));
    std::vector<double> s1(static_cast<std::size_t>(n), 0.0), s2(static_cast<std::size_t>(n), 0.0),
        s3(static_cast<std::size_t>(n), 0.0), s4(static_cast<std::size_t>(n), 0.0);

    for (int i = 0; i < n; ++i) {
        const double dxT = alt.ensemble.state(steps, i) - ref.ensemble.state(steps, i);
        const double dyT = alt.backward.y_at(steps, i) - ref.backward.y_at(steps, i);
        const double dy0 = alt.backward.y_at(0, i) - ref.backward.y_at(0, i);

        double acc1 = ref.adjoints.p0_at(steps, i) * dxT;
        double sc1 = std::abs(acc1);
        double acc2 = 0.0, sc2 = 0.0;
        for (std::size_t j = 0; j < dm; ++j) {
            const double term = ref.adjoints.p1_at(steps, static_cast<int>(j), i) *
                                dM[static_cast<std::size_t>(steps)][j];
            acc2 += term;
            sc2 += std::abs(term);
        }
        double acc3 = ref.adjoints.lambda0_at(steps, i) * dyT -
                      ref.adjoints.lambda0_at(0, i) * dy0;
        double sc3 = std::abs(ref.adjoints.lambda0_at(steps, i) * dyT) +
                     std::abs(ref.adjoints.lambda0_at(0, i) * dy0);
        double acc4 = 0.0, sc4 = 0.0;
        for (std::size_t j = 0; j < dn; ++j) {
            const auto phiT = spec.basis_n.at(j);
            const double dphiT = phiT.f(alt.backward.y_at(steps, i)) -
                                 phiT.f(ref.backward.y_at(steps, i));
            const double dphi0 =
                phiT.f(alt.backward.y_at(0, i)) - phiT.f(ref.backward.y_at(0, i));
            const double tT = ref.adjoints.lambda1_row(steps)[j] * dphiT;
            const double t0 = ref.adjoints.lambda1_row(0)[j] * dphi0;
            acc4 += tT - t0;
            sc4 += std::abs(tT) + std::abs(t0);
        }

        for (int k = 0; k < steps; ++k) {
            const CoefArgs ra = node_args(spec, ref.ensemble, ref.backward, u_ref, rv.m_rows, k, i);
            const CoefArgs aa = node_args(spec, alt.ensemble, alt.backward, u_alt, av.m_rows, k, i);

            const double db_gap = eval_coefficient(spec, Coefficient::B, aa) -
                                  eval_coefficient(spec, Coefficient::B, ra);
            const double dsig_gap = eval_coefficient(spec, Coefficient::Sigma, aa) -
                                    eval_coefficient(spec, Coefficient::Sigma, ra);
            const double dg_gap = eval_coefficient(spec, Coefficient::G, aa) -
                                  eval_coefficient(spec, Coefficient::G, ra);
            const double dx = aa.x - ra.x;
            const double dy = aa.y - ra.y;
            const double dz = aa.z - ra.z;

            const double p0 = ref.adjoints.p0_at(k, i);
            const double q0 = ref.adjoints.q0_at(k, i);
            const double l0 = ref.adjoints.lambda0_at(k, i);

            const double dxH =
                eval_derivative(spec, Coefficient::F, Wrt::x(), ra) +
                p0 * eval_derivative(spec, Coefficient::B, Wrt::x(), ra) +
                q0 * eval_derivative(spec, Coefficient::Sigma, Wrt::x(), ra) +
                l0 * eval_derivative(spec, Coefficient::G, Wrt::x(), ra);
            const double dyH = eval_derivative(spec, Coefficient::F, Wrt::y(), ra) +
                               l0 * eval_derivative(spec, Coefficient::G, Wrt::y(), ra);
            const double dzH = eval_derivative(spec, Coefficient::F, Wrt::z(), ra) +
                               l0 * eval_derivative(spec, Coefficient::G, Wrt::z(), ra);

            acc1 -= (p0 * db_gap - dx * dxH + q0 * dsig_gap) * dt;
            sc1 += (std::abs(p0 * db_gap) + std::abs(dx * dxH) + std::abs(q0 * dsig_gap)) * dt;

            for (std::size_t j = 0; j < dm; ++j) {
                const double p1 = ref.adjoints.p1_at(k, static_cast<int>(j), i);
                const double dmj = dM[static_cast<std::size_t>(k)][j];
                const double dmpj = av.m_prime[static_cast<std::size_t>(k)][j] -
                                    rv.m_prime[static_cast<std::size_t>(k)][j];
                const double gmH =
                    eval_derivative(spec, Coefficient::F, Wrt::m(static_cast<int>(j)), ra) +
                    p0 * eval_derivative(spec, Coefficient::B, Wrt::m(static_cast<int>(j)), ra) +
                    q0 * eval_derivative(spec, Coefficient::Sigma, Wrt::m(static_cast<int>(j)),
                                         ra) +
                    l0 * eval_derivative(spec, Coefficient::G, Wrt::m(static_cast<int>(j)), ra);
                acc2 -= (p1 * dmpj - gmH * dmj) * dt;
                sc2 += (std::abs(p1 * dmpj) + std::abs(gmH * dmj)) * dt;
            }

            acc3 -= (-l0 * dg_gap - dy * dyH + dz * dzH) * dt;
            sc3 += (std::abs(l0 * dg_gap) + std::abs(dy * dyH) + std::abs(dz * dzH)) * dt;

            for (std::size_t j = 0; j < dn; ++j) {
                const auto& fn = spec.basis_n.at(j);
                const double dphi = fn.f(aa.y) - fn.f(ra.y);
                const double g_alt = eval_coefficient(spec, Coefficient::G, aa);
                const double g_ref = eval_coefficient(spec, Coefficient::G, ra);
                const double dd = (-g_alt * fn.df(aa.y) + 0.5 * aa.z * aa.z * fn.d2f(aa.y)) -
                                  (-g_ref * fn.df(ra.y) + 0.5 * ra.z * ra.z * fn.d2f(ra.y));
                const double l1 = ref.adjoints.lambda1_row(k)[j];
                acc4 -= (l1 * dd - gnH[static_cast<std::size_t>(k)][j] * dphi) * dt;
                sc4 += (std::abs(l1 * dd) +
                        std::abs(gnH[static_cast<std::size_t>(k)][j] * dphi)) *
                       dt;
            }
        }
        r1[static_cast<std::size_t>(i)] = acc1;
        r2[static_cast<std::size_t>(i)] = acc2;
        r3[static_cast<std::size_t>(i)] = acc3;
        r4[static_cast<std::size_t>(i)] = acc4;
        s1[static_cast<std::size_t>(i)] = sc1;
        s2[static_cast<std::size_t>(i)] = sc2;
        s3[static_cast<std::size_t>(i)] = sc3;
        s4[static_cast<std::size_t>(i)] = sc4;
    }

    DualityReport report;
    const std::array<std::vector<double>*, 4> rs{&r1, &r2, &r3, &r4};
    const std::array<std::vector<double>*, 4> ss{&s1, &s2, &s3, &s4};
    for (int t = 0; t < 4; ++t) {
        report.terms[static_cast<std::size_t>(t)].residual = mean_of(*rs[static_cast<std::size_t>(t)]);
        report.terms[static_cast<std::size_t>(t)].stderr_ =
            stderr_of_mean(*rs[static_cast<std::size_t>(t)]);
        report.terms[static_cast<std::size_t>(t)].scale = mean_of(*ss[static_cast<std::size_t>(t)]);
    }
    return report;
}

}  // namespace mfc
