#pragma once

#include <complex>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mfc {

// Finitely supported probability measure on R, stored as parallel
// location/weight arrays. Weights must be nonnegative and sum to one.
struct EmpiricalMeasure {
    std::vector<double> locations;
    std::vector<double> weights;

    static EmpiricalMeasure equal_weights(std::vector<double> locs);
    static EmpiricalMeasure dirac(double x);

    std::size_t size() const { return locations.size(); }
    void validate() const;  // throws std::invalid_argument on bad atoms
};

// Scalar test function with two derivatives, used both for measure
// statistics and for the reduced representation of measure-flow derivatives.
struct TestFunction {
    std::function<double(double)> f, df, d2f;
    std::string name;
};

// Ordered family of test functions phi_1..phi_d. statistics(mu) evaluates
// the moment vector (integral of phi_j d mu)_j.
class StatisticBasis {
public:
    StatisticBasis() = default;
    explicit StatisticBasis(std::vector<TestFunction> fns) : fns_(std::move(fns)) {}

    // x, x^2, ..., x^degree
    static StatisticBasis monomials(int degree);

    std::size_t size() const { return fns_.size(); }
    const TestFunction& at(std::size_t j) const { return fns_.at(j); }

private:
    std::vector<TestFunction> fns_;
};

// Gauss-Hermite rule for integrals of f(y) exp(-y^2) dy on the whole line.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussHermiteRule(int n);
    static const GaussHermiteRule& shared64();
};

// Characteristic function of mu at frequency y.
std::complex<double> fourier_transform_at(const EmpiricalMeasure& mu, double y);

// ||mu||^2 = integral of |mu_hat(y)|^2 exp(-y^2) dy.
double norm_squared(const EmpiricalMeasure& mu,
                    const GaussHermiteRule& rule = GaussHermiteRule::shared64());

// ||mu - eta||^2 under the same weighted Fourier norm. Zero iff the two
// transforms agree at every quadrature node.
double distance_squared(const EmpiricalMeasure& mu, const EmpiricalMeasure& eta,
                        const GaussHermiteRule& rule = GaussHermiteRule::shared64());

// Re integral of mu_hat(y) conj(eta_hat(y)) exp(-y^2) dy, the bilinear form
// in the expansion distance^2 = ||mu||^2 + ||eta||^2 - 2 <mu, eta>.
double inner_product_re(const EmpiricalMeasure& mu, const EmpiricalMeasure& eta,
                        const GaussHermiteRule& rule = GaussHermiteRule::shared64());

std::vector<double> statistics(const EmpiricalMeasure& mu, const StatisticBasis& basis);

// Same moment vector taken straight off a state slice with equal weights.
std::vector<double> statistics(std::span<const double> states, const StatisticBasis& basis);

}  // namespace mfc
