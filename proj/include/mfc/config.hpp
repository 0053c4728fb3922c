#pragma once

#include <cstdint>
#include <string>

namespace mfc {

// Parsed batch-run configuration. Line-based `key = value` text with `#`
// comments; unknown keys, duplicate keys, malformed values, and constraint
// violations are all rejected with the offending line number.
struct RunConfig {
    std::string command;            // simulate-forward, solve-bsde, optimize,
                                    // risk, benchmark-portfolio, property-suite
    std::string problem;            // gbm, mean-reverting, lq, portfolio
                                    // (empty = per-command default)
    int particles = 10000;          // N
    int steps = 100;                // K
    double horizon = 1.0;           // T
    std::uint64_t seed = 42;
    int basis_degree = 3;
    double ridge = 1e-8;
    double step0 = 0.1;
    int max_iters = 200;
    double tol = 1e-3;
    double x0 = 1.0;

    double gbm_drift = 0.05;
    double gbm_vol = 0.2;
    double mr_kappa = 1.0;
    double mr_sigma = 0.2;
    double pb_b0 = 0.04;
    double pb_sigma0 = 0.2;
    double pb_r0 = 0.05;
    double lq_sigma = 0.2;

    double risk_r = 0.0;
    double risk_rprime = 0.1;
    bool risk_quadratic = false;    // adds F(t, z) = -z^2/2 to the risk driver

    std::string output_dir = "out";
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Canonical `key = value` rendering of every field, used to echo the
// resolved configuration into summary files.
std::string render_config(const RunConfig& config);

}  // namespace mfc
