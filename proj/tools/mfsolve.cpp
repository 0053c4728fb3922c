#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>

#include "mfc/config.hpp"
#include "mfc/runner.hpp"

namespace {

void print_usage(std::ostream& out) {
    out << "usage: mfsolve --config <path> [--output-dir <path>] [--seed <int>]\n"
        << "\n"
        << "Runs one batch experiment described by a key = value config file.\n"
        << "Commands: simulate-forward, solve-bsde, optimize, risk,\n"
        << "          benchmark-portfolio, property-suite.\n"
        << "--output-dir and --seed override the config file values.\n";
}

}  // namespace

int main(int argc, char** argv) {
    std::string config_path;
    std::string output_dir;
    bool has_output_dir = false;
    std::uint64_t seed = 0;
    bool has_seed = false;

    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--help" || arg == "-h") {
            print_usage(std::cout);
            return 0;
        }
        if (arg == "--config" || arg == "--output-dir" || arg == "--seed") {
            if (i + 1 >= argc) {
                std::cerr << "mfsolve: missing value after " << arg << "\n";
                return 2;
            }
            const std::string value = argv[++i];
            if (arg == "--config") {
                config_path = value;
            } else if (arg == "--output-dir") {
                output_dir = value;
                has_output_dir = true;
            } else {
                try {
                    std::size_t consumed = 0;
                    const long long parsed = std::stoll(value, &consumed);
                    if (consumed != value.size() || parsed < 0)
                        throw std::invalid_argument(value);
                    seed = static_cast<std::uint64_t>(parsed);
                    has_seed = true;
                } catch (const std::exception&) {
                    std::cerr << "mfsolve: --seed expects a nonnegative integer, got '" << value
                              << "'\n";
                    return 2;
                }
            }
            continue;
        }
        std::cerr << "mfsolve: unknown argument '" << arg << "'\n";
        print_usage(std::cerr);
        return 2;
    }

    if (config_path.empty()) {
        std::cerr << "mfsolve: --config is required\n";
        print_usage(std::cerr);
        return 2;
    }

    try {
        mfc::RunConfig config = mfc::load_config_file(config_path);
        if (has_output_dir) config.output_dir = output_dir;
        if (has_seed) config.seed = seed;
        return mfc::run(config);
    } catch (const std::exception& err) {
        std::cerr << "mfsolve: " << err.what() << "\n";
        return 1;
    }
}
