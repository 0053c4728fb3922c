#pragma once

#include <functional>
#include <vector>

#include "mfc/backward.hpp"
#include "mfc/forward.hpp"
#include "mfc/grid.hpp"
#include "mfc/regression.hpp"

namespace mfc {

// Driver data for the risk-measure BSDE
//   dY = -( -r(t) Y - r'(t) mean(Y) + F(t, Z) ) dt + Z dB,   Y(T) = xi,
// quoting risk as phi = -Y. All three pieces default to zero.
struct RiskDriverSpec {
    std::function<double(double)> r = [](double) { return 0.0; };
    std::function<double(double)> r_prime = [](double) { return 0.0; };
    std::function<double(double, double)> F = [](double, double) { return 0.0; };
};

struct RiskQuote {
    double phi0 = 0.0;              // quoted risk at time zero, -Y(0)
    std::vector<double> phi_path;   // -mean(Y) per grid node
    std::vector<double> mean_y;     // mean(Y) per grid node
    double mc_stderr = 0.0;         // sampling error proxy for phi0
    BackwardSolution solution;
};

// Trapezoidal cumulative rate integral over [0, t_node].
double rate_integral(const std::function<double(double)>& rate, const TimeGrid& grid, int node);

// Solves the risk BSDE on an existing forward ensemble. `terminal` maps the
// terminal particle state to the position value xi; it must produce finite
// values with a finite second moment on the sampled paths.
RiskQuote risk(const RiskDriverSpec& driver, const std::function<double(double)>& terminal,
               const ParticleEnsemble& ensemble, const TimeGrid& grid,
               const RegressionBasis& basis = {});

struct DiscountedDriver {
    RiskDriverSpec driver;          // rates removed, F replaced by its discounted form
    std::vector<double> discount;   // D(t_k) = exp(-int_0^{t_k} (r + r') ds)
};

// Discounting transform: returns the per-node discount factors together with
// the driver F^r(t, z) = D(t) F(t, D(t) z) and both rates set to zero. The
// transform is exact for drivers with no z dependence; for general F the two
// formulations are only compared, never asserted equal.
DiscountedDriver discounted_driver(const RiskDriverSpec& driver, const TimeGrid& grid);

// Quotes the risk of xi and of xi + a * exp(int_0^T (r + r')) on the same
// paths and returns |phi0(shifted) - (phi0(xi) - a)|. Cash added at the
// discounted rate must reduce the quote one-for-one.
double translation_invariance_check(const RiskDriverSpec& driver,
                                    const std::function<double(double)>& terminal, double a,
                                    const ParticleEnsemble& ensemble, const TimeGrid& grid,
                                    const RegressionBasis& basis = {});

}  // namespace mfc
