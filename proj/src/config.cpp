#include "mfc/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mfc {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(int line, const std::string& message) {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + message);
}

double parse_double(int line, const std::string& key, const std::string& value) {
    std::size_t consumed = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &consumed);
    } catch (const std::exception&) {
        fail(line, "value for '" + key + "' is not a number: '" + value + "'");
    }
    if (consumed != value.size())
        fail(line, "trailing characters after the number for '" + key + "': '" + value + "'");
    return out;
}

long long parse_int(int line, const std::string& key, const std::string& value) {
    std::size_t consumed = 0;
    long long out = 0;
    try {
        out = std::stoll(value, &consumed);
    } catch (const std::exception&) {
        fail(line, "value for '" + key + "' is not an integer: '" + value + "'");
    }
    if (consumed != value.size())
        fail(line, "trailing characters after the integer for '" + key + "': '" + value + "'");
    return out;
}

bool parse_bool(int line, const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    fail(line, "value for '" + key + "' must be true or false, got '" + value + "'");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    std::set<std::string> seen;
    std::istringstream stream(text);
    std::string raw;
    int line_no = 0;
    int command_line = 0;

    while (std::getline(stream, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;

        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "missing key before '='");
        if (value.empty()) fail(line_no, "missing value for '" + key + "'");
        if (!seen.insert(key).second) fail(line_no, "duplicate key '" + key + "'");

        if (key == "command") {
            config.command = value;
            command_line = line_no;
        } else if (key == "problem") {
            config.problem = value;
            if (value != "gbm" && value != "mean-reverting" && value != "lq" &&
                value != "portfolio")
                fail(line_no, "unknown problem preset '" + value + "'");
        } else if (key == "N") {
            const long long n = parse_int(line_no, key, value);
            if (n < 2) fail(line_no, "N must be at least 2");
            if (n > 100000000) fail(line_no, "N is implausibly large");
            config.particles = static_cast<int>(n);
        } else if (key == "K") {
            const long long k = parse_int(line_no, key, value);
            if (k < 1) fail(line_no, "K must be at least 1");
            if (k > 1000000) fail(line_no, "K is implausibly large");
            config.steps = static_cast<int>(k);
        } else if (key == "T") {
            config.horizon = parse_double(line_no, key, value);
            if (!(config.horizon > 0.0)) fail(line_no, "T must be positive");
        } else if (key == "seed") {
            const long long s = parse_int(line_no, key, value);
            if (s < 0) fail(line_no, "seed must be nonnegative");
            config.seed = static_cast<std::uint64_t>(s);
        } else if (key == "basis_degree") {
            const long long d = parse_int(line_no, key, value);
            if (d < 0 || d > 10) fail(line_no, "basis_degree must be between 0 and 10");
            config.basis_degree = static_cast<int>(d);
        } else if (key == "ridge") {
            config.ridge = parse_double(line_no, key, value);
            if (config.ridge < 0.0) fail(line_no, "ridge must be nonnegative");
        } else if (key == "step0") {
            config.step0 = parse_double(line_no, key, value);
            if (!(config.step0 > 0.0)) fail(line_no, "step0 must be positive");
        } else if (key == "max_iters") {
            const long long m = parse_int(line_no, key, value);
            if (m < 0) fail(line_no, "max_iters must be nonnegative");
            config.max_iters = static_cast<int>(m);
        } else if (key == "tol") {
            config.tol = parse_double(line_no, key, value);
            if (!(config.tol > 0.0)) fail(line_no, "tol must be positive");
        } else if (key == "x0") {
            config.x0 = parse_double(line_no, key, value);
        } else if (key == "gbm_drift") {
            config.gbm_drift = parse_double(line_no, key, value);
        } else if (key == "gbm_vol") {
            config.gbm_vol = parse_double(line_no, key, value);
            if (config.gbm_vol < 0.0) fail(line_no, "gbm_vol must be nonnegative");
        } else if (key == "mr_kappa") {
            config.mr_kappa = parse_double(line_no, key, value);
        } else if (key == "mr_sigma") {
            config.mr_sigma = parse_double(line_no, key, value);
            if (config.mr_sigma < 0.0) fail(line_no, "mr_sigma must be nonnegative");
        } else if (key == "pb_b0") {
            config.pb_b0 = parse_double(line_no, key, value);
        } else if (key == "pb_sigma0") {
            config.pb_sigma0 = parse_double(line_no, key, value);
            if (!(config.pb_sigma0 > 1e-8))
                fail(line_no, "pb_sigma0 must be greater than 1e-8");
        } else if (key == "pb_r0") {
            config.pb_r0 = parse_double(line_no, key, value);
        } else if (key == "lq_sigma") {
            config.lq_sigma = parse_double(line_no, key, value);
            if (config.lq_sigma < 0.0) fail(line_no, "lq_sigma must be nonnegative");
        } else if (key == "risk_r") {
            config.risk_r = parse_double(line_no, key, value);
        } else if (key == "risk_rprime") {
            config.risk_rprime = parse_double(line_no, key, value);
        } else if (key == "risk_quadratic") {
            config.risk_quadratic = parse_bool(line_no, key, value);
        } else if (key == "output_dir") {
            config.output_dir = value;
        } else {
            fail(line_no, "unknown key '" + key + "'");
        }
    }

    if (config.command.empty())
        throw std::invalid_argument("config: missing required key 'command'");
    if (config.command != "simulate-forward" && config.command != "solve-bsde" &&
        config.command != "optimize" && config.command != "risk" &&
        config.command != "benchmark-portfolio" && config.command != "property-suite")
        fail(command_line, "unknown command '" + config.command + "'");
    return config;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("config: cannot open file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string render_config(const RunConfig& config) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "command = " << config.command << "\n";
    out << "problem = " << (config.problem.empty() ? std::string("(default)") : config.problem)
        << "\n";
    out << "N = " << config.particles << "\n";
    out << "K = " << config.steps << "\n";
    out << "T = " << num(config.horizon) << "\n";
    out << "seed = " << config.seed << "\n";
    out << "basis_degree = " << config.basis_degree << "\n";
    out << "ridge = " << num(config.ridge) << "\n";
    out << "step0 = " << num(config.step0) << "\n";
    out << "max_iters = " << config.max_iters << "\n";
    out << "tol = " << num(config.tol) << "\n";
    out << "x0 = " << num(config.x0) << "\n";
    out << "gbm_drift = " << num(config.gbm_drift) << "\n";
    out << "gbm_vol = " << num(config.gbm_vol) << "\n";
    out << "mr_kappa = " << num(config.mr_kappa) << "\n";
    out << "mr_sigma = " << num(config.mr_sigma) << "\n";
    out << "pb_b0 = " << num(config.pb_b0) << "\n";
    out << "pb_sigma0 = " << num(config.pb_sigma0) << "\n";
    out << "pb_r0 = " << num(config.pb_r0) << "\n";
    out << "lq_sigma = " << num(config.lq_sigma) << "\n";
    out << "risk_r = " << num(config.risk_r) << "\n";
    out << "risk_rprime = " << num(config.risk_rprime) << "\n";
    out << "risk_quadratic = " << (config.risk_quadratic ? "true" : "false") << "\n";
    out << "output_dir = " << config.output_dir << "\n";
    return out.str();
}

}  // namespace mfc
