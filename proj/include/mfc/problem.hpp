#pragma once

#include "mfc/grid.hpp"
#include "mfc/measure.hpp"

#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mfc {

// Admissible control values form a closed interval (possibly unbounded).
struct ControlSet {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();

    double project(double u) const {
        if (u < lower) return lower;
        if (u > upper) return upper;
        return u;
    }
};

// Trivial: deterministic open-loop values per grid node.
// Full: feedback rule of (t, x).
enum class InformationMode { Trivial, Full };

enum class OptimizeSense { Minimize, Maximize };

struct ControlProcess {
    InformationMode mode = InformationMode::Trivial;
    std::vector<double> open_loop;                      // size K+1 in Trivial mode
    std::function<double(double, double)> feedback;     // (t, x) in Full mode

    static ControlProcess constant(const TimeGrid& grid, double value);
    static ControlProcess open_loop_values(std::vector<double> values);
    static ControlProcess feedback_rule(std::function<double(double, double)> rule);

    // Raw (unprojected) control value for particle state x at node k.
    double value(const TimeGrid& grid, int k, double x) const;
};

// Full argument pack for any coefficient. Each coefficient reads only the
// slots it cares about: b(t,x,m,u), sigma(t,x,m,u), g(t,x,y,z,m,n,u),
// f(t,x,y,z,m,n,u), h(x,m), phi(y,n).
struct CoefArgs {
    double t = 0.0, x = 0.0, y = 0.0, z = 0.0, u = 0.0;
    std::span<const double> m_stats{};
    std::span<const double> n_stats{};
};

enum class Coefficient { B, Sigma, G, F, H, Phi };

// Differentiation slot: scalar arguments or a single statistic coordinate.
struct Wrt {
    enum class Kind { X, Y, Z, U, MStat, NStat } kind = Kind::X;
    int index = 0;  // statistic coordinate for MStat / NStat

    static Wrt x() { return {Kind::X, 0}; }
    static Wrt y() { return {Kind::Y, 0}; }
    static Wrt z() { return {Kind::Z, 0}; }
    static Wrt u() { return {Kind::U, 0}; }
    static Wrt m(int j) { return {Kind::MStat, j}; }
    static Wrt n(int j) { return {Kind::NStat, j}; }

    friend bool operator<(const Wrt& a, const Wrt& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.index < b.index;
    }
};

using CoefFn = std::function<double(const CoefArgs&)>;

struct ProblemSpec {
    std::string name;
    CoefFn b, sigma, g, f, h, phi;
    StatisticBasis basis_m = StatisticBasis::monomials(3);
    StatisticBasis basis_n = StatisticBasis::monomials(3);
    double x0 = 1.0;
    double horizon = 1.0;
    ControlSet control_set;
    InformationMode info = InformationMode::Trivial;
    OptimizeSense sense = OptimizeSense::Minimize;

    // Analytic derivative suppliers; anything missing falls back to central
    // finite differences inside eval_derivative.
    std::map<std::pair<Coefficient, Wrt>, CoefFn> derivatives;

    void register_derivative(Coefficient which, Wrt wrt, CoefFn fn);
};

// Evaluates one coefficient; throws std::domain_error on a non-finite result.
double eval_coefficient(const ProblemSpec& spec, Coefficient which, const CoefArgs& args);

// Analytic supplier when registered, otherwise central finite difference
// with step 1e-5 * max(1, |argument|).
double eval_derivative(const ProblemSpec& spec, Coefficient which, Wrt wrt,
                       const CoefArgs& args);

// Largest observed |delta value| / |delta args| over random probe pairs;
// a crude empirical Lipschitz constant used by the property suite.
double lipschitz_probe(const ProblemSpec& spec, Coefficient which, int probes,
                       std::uint64_t seed);

// Presets ------------------------------------------------------------------

// dX = drift X dt + vol X dB, no costs, no control dependence.
ProblemSpec make_gbm(double drift = 0.05, double vol = 0.2, double x0 = 1.0);

// dX = kappa (mean(m) - X) dt + vol dB; interacts through the running mean.
ProblemSpec make_mean_reverting(double kappa = 1.0, double vol = 0.2, double x0 = 1.0);

// dX = u dt + vol dB, f = u^2, h = x^2, free control, minimized.
ProblemSpec make_lq(double vol = 0.2, double x0 = 1.0);

// Wealth dynamics dX = u b0 X dt + u sigma0 X dB with the entropic-style
// driver g = -r0 mean(n) - z^2/2 and phi(y) = y, maximized.
ProblemSpec make_portfolio_problem(std::function<double(double)> b0,
                                   std::function<double(double)> sigma0,
                                   std::function<double(double)> r0,
                                   double x0 = 1.0);
ProblemSpec make_portfolio_problem(double b0 = 0.04, double sigma0 = 0.2,
                                   double r0 = 0.05, double x0 = 1.0);

}  // namespace mfc
