#include "mfc/measure.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mfc {

EmpiricalMeasure EmpiricalMeasure::equal_weights(std::vector<double> locs) {
    if (locs.empty()) throw std::invalid_argument("EmpiricalMeasure: no atoms");
    EmpiricalMeasure mu;
    const double w = 1.0 / static_cast<double>(locs.size());
    mu.weights.assign(locs.size(), w);
    mu.locations = std::move(locs);
    return mu;
}

EmpiricalMeasure EmpiricalMeasure::dirac(double x) {
    return EmpiricalMeasure{{x}, {1.0}};
}

void EmpiricalMeasure::validate() const {
    if (locations.empty()) throw std::invalid_argument("EmpiricalMeasure: no atoms");
    if (locations.size() != weights.size())
        throw std::invalid_argument("EmpiricalMeasure: location/weight length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < locations.size(); ++i) {
        if (!std::isfinite(locations[i]))
            throw std::invalid_argument("EmpiricalMeasure: non-finite atom location");
        if (!(weights[i] >= 0.0))
            throw std::invalid_argument("EmpiricalMeasure: negative atom weight");
        total += weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("EmpiricalMeasure: weights must sum to one");
}

StatisticBasis StatisticBasis::monomials(int degree) {
    if (degree < 1) throw std::invalid_argument("StatisticBasis: degree must be >= 1");
    std::vector<TestFunction> fns;
    fns.reserve(static_cast<std::size_t>(degree));
    for (int j = 1; j <= degree; ++j) {
        TestFunction tf;
        tf.name = "x^" + std::to_string(j);
        tf.f = [j](double x) { return std::pow(x, j); };
        tf.df = [j](double x) { return j * std::pow(x, j - 1); };
        tf.d2f = [j](double x) { return j <= 1 ? 0.0 : j * (j - 1) * std::pow(x, j - 2); };
        fns.push_back(std::move(tf));
    }
    return StatisticBasis(std::move(fns));
}

// Golub-Welsch: eigen-decompose the symmetric tridiagonal Jacobi matrix of
// the Hermite recurrence (off-diagonal sqrt(k/2)); weights are
// sqrt(pi) * (first eigenvector component)^2.
GaussHermiteRule::GaussHermiteRule(int n) {
    if (n < 1) throw std::invalid_argument("GaussHermiteRule: need at least one node");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1 > 0 ? n - 1 : 0);
    for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("GaussHermiteRule: eigen decomposition failed");
    nodes.resize(n);
    weights.resize(n);
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
        nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        weights[i] = sqrt_pi * v0 * v0;
    }
}

const GaussHermiteRule& GaussHermiteRule::shared64() {
    static const GaussHermiteRule rule(64);
    return rule;
}

std::complex<double> fourier_transform_at(const EmpiricalMeasure& mu, double y) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < mu.locations.size(); ++i) {
        re += mu.weights[i] * std::cos(mu.locations[i] * y);
        im += mu.weights[i] * std::sin(mu.locations[i] * y);
    }
    return {re, im};
}

double norm_squared(const EmpiricalMeasure& mu, const GaussHermiteRule& rule) {
    mu.validate();
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const auto ft = fourier_transform_at(mu, rule.nodes[q]);
        acc += rule.weights[q] * std::norm(ft);
    }
    return acc;
}

double distance_squared(const EmpiricalMeasure& mu, const EmpiricalMeasure& eta,
                        const GaussHermiteRule& rule) {
    mu.validate();
    eta.validate();
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const auto d = fourier_transform_at(mu, rule.nodes[q]) -
                       fourier_transform_at(eta, rule.nodes[q]);
        acc += rule.weights[q] * std::norm(d);
    }
    return acc;
}

double inner_product_re(const EmpiricalMeasure& mu, const EmpiricalMeasure& eta,
                        const GaussHermiteRule& rule) {
    mu.validate();
    eta.validate();
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const auto a = fourier_transform_at(mu, rule.nodes[q]);
        const auto b = fourier_transform_at(eta, rule.nodes[q]);
        acc += rule.weights[q] * (a.real() * b.real() + a.imag() * b.imag());
    }
    return acc;
}

std::vector<double> statistics(const EmpiricalMeasure& mu, const StatisticBasis& basis) {
    mu.validate();
    std::vector<double> out(basis.size(), 0.0);
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const auto& fn = basis.at(j);
        double acc = 0.0;
        for (std::size_t i = 0; i < mu.locations.size(); ++i)
            acc += mu.weights[i] * fn.f(mu.locations[i]);
        out[j] = acc;
    }
    return out;
}

std::vector<double> statistics(std::span<const double> states, const StatisticBasis& basis) {
    if (states.empty()) throw std::invalid_argument("statistics: empty state slice");
    std::vector<double> out(basis.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(states.size());
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const auto& fn = basis.at(j);
        double acc = 0.0;
        for (double x : states) acc += fn.f(x);
        out[j] = acc * inv_n;
    }
    return out;
}

}  // namespace mfc
