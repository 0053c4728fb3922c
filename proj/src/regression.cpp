#include "mfc/regression.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>

namespace mfc {

double mean_of(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean_of: empty sample");
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double stderr_of_mean(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("stderr_of_mean: need two samples");
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    const auto n = static_cast<double>(v.size());
    return std::sqrt(acc / (n - 1.0) / n);
}

struct StepRegression::Impl {
    Eigen::MatrixXd design;                              // N x (degree+1), standardized powers
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;      // of the ridge-augmented design
    int n = 0, cols = 0;
    double ridge = 0.0;
    bool mean_only = false;
};

StepRegression::StepRegression(std::span<const double> x, const RegressionBasis& basis) {
    if (x.size() < 2) throw std::invalid_argument("StepRegression: need two samples");
    if (basis.degree < 0) throw std::invalid_argument("StepRegression: negative degree");
    if (basis.ridge < 0.0) throw std::invalid_argument("StepRegression: negative ridge");

    const auto n = static_cast<int>(x.size());
    auto impl = std::make_shared<Impl>();
    impl->n = n;

    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    const double sd = std::sqrt(var / n);

    // A constant regressor spans only the intercept; anything else the
    // basis would add is noise, so fall back to the sample mean.
    degenerate_ = !(sd > 1e-13 * (1.0 + std::abs(mu)));
    impl->mean_only = degenerate_ || basis.degree == 0;
    if (impl->mean_only) {
        impl_ = std::move(impl);
        return;
    }

    const int cols = basis.degree + 1;
    impl->cols = cols;
    impl->design.resize(n, cols);
    for (int i = 0; i < n; ++i) {
        const double s = (x[static_cast<std::size_t>(i)] - mu) / sd;
        double p = 1.0;
        for (int j = 0; j < cols; ++j) {
            impl->design(i, j) = p;
            p *= s;
        }
    }

    // Ridge via augmented rows (sqrt(lambda) identity on the non-intercept
    // block); retry with 10x the ridge if the factorization is unusable.
    double lam = basis.ridge;
    for (int attempt = 0;; ++attempt) {
        Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + cols - 1, cols);
        aug.topRows(n) = impl->design;
        const double sqrt_lam = std::sqrt(lam);
        for (int j = 1; j < cols; ++j) aug(n + j - 1, j) = sqrt_lam;
        impl->qr.compute(aug);
        const bool ok = impl->qr.info() == Eigen::Success && impl->qr.rank() == cols;
        if (ok) break;
        if (attempt >= 3)
            throw std::runtime_error("StepRegression: singular design after ridge retries");
        lam = lam > 0.0 ? lam * 10.0 : 1e-12;
    }
    impl->ridge = lam;
    applied_ridge_ = lam;
    impl_ = std::move(impl);
}

std::vector<double> StepRegression::fit(std::span<const double> targets) const {
    const Impl& im = *impl_;
    if (static_cast<int>(targets.size()) != im.n)
        throw std::invalid_argument("StepRegression: target length mismatch");

    if (im.mean_only) {
        double acc = 0.0;
        for (double v : targets) acc += v;
        return std::vector<double>(targets.size(), acc / im.n);
    }

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(im.n + im.cols - 1);
    for (int i = 0; i < im.n; ++i) rhs(i) = targets[static_cast<std::size_t>(i)];
    const Eigen::VectorXd beta = im.qr.solve(rhs);
    Eigen::VectorXd fitted = im.design * beta;
    return std::vector<double>(fitted.data(), fitted.data() + im.n);
}

}  // namespace mfc
