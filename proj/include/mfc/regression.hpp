#pragma once

#include <memory>
#include <span>
#include <vector>

namespace mfc {

struct RegressionBasis {
    int degree = 3;
    double ridge = 1e-8;
};

// Per-step polynomial least squares with ridge on the non-intercept
// coefficients. The regressor sample is standardized before powers are
// formed; the factorization is reused across right-hand sides. When the
// regressor sample is (numerically) constant the fit collapses to the plain
// sample mean, which is also the correct conditional expectation there.
class StepRegression {
public:
    StepRegression(std::span<const double> x, const RegressionBasis& basis);

    // Fitted conditional-expectation values at the sample points.
    std::vector<double> fit(std::span<const double> targets) const;

    bool degenerate() const { return degenerate_; }
    double applied_ridge() const { return applied_ridge_; }

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
    bool degenerate_ = false;
    double applied_ridge_ = 0.0;
};

double mean_of(std::span<const double> v);
double stderr_of_mean(std::span<const double> v);

}  // namespace mfc
