#include "mfc/problem.hpp"

#include "mfc/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mfc {

ControlProcess ControlProcess::constant(const TimeGrid& grid, double value) {
    ControlProcess u;
    u.mode = InformationMode::Trivial;
    u.open_loop.assign(static_cast<std::size_t>(grid.nodes()), value);
    return u;
}

ControlProcess ControlProcess::open_loop_values(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("ControlProcess: empty value list");
    ControlProcess u;
    u.mode = InformationMode::Trivial;
    u.open_loop = std::move(values);
    return u;
}

ControlProcess ControlProcess::feedback_rule(std::function<double(double, double)> rule) {
    if (!rule) throw std::invalid_argument("ControlProcess: null feedback rule");
    ControlProcess u;
    u.mode = InformationMode::Full;
    u.feedback = std::move(rule);
    return u;
}

double ControlProcess::value(const TimeGrid& grid, int k, double x) const {
    if (mode == InformationMode::Trivial) {
        if (k < 0 || static_cast<std::size_t>(k) >= open_loop.size())
            throw std::out_of_range("ControlProcess: node index outside open-loop table");
        return open_loop[static_cast<std::size_t>(k)];
    }
    if (!feedback) throw std::invalid_argument("ControlProcess: missing feedback rule");
    return feedback(grid.node(k), x);
}

void ProblemSpec::register_derivative(Coefficient which, Wrt wrt, CoefFn fn) {
    derivatives[{which, wrt}] = std::move(fn);
}

namespace {

const CoefFn& pick(const ProblemSpec& spec, Coefficient which) {
    switch (which) {
        case Coefficient::B: return spec.b;
        case Coefficient::Sigma: return spec.sigma;
        case Coefficient::G: return spec.g;
        case Coefficient::F: return spec.f;
        case Coefficient::H: return spec.h;
        case Coefficient::Phi: return spec.phi;
    }
    throw std::logic_error("eval_coefficient: unknown coefficient");
}

const char* coef_name(Coefficient which) {
    switch (which) {
        case Coefficient::B: return "b";
        case Coefficient::Sigma: return "sigma";
        case Coefficient::G: return "g";
        case Coefficient::F: return "f";
        case Coefficient::H: return "h";
        case Coefficient::Phi: return "phi";
    }
    return "?";
}

[[noreturn]] void throw_non_finite(Coefficient which, const CoefArgs& a) {
    std::ostringstream os;
    os << "coefficient " << coef_name(which) << " returned a non-finite value at t=" << a.t
       << " x=" << a.x << " y=" << a.y << " z=" << a.z << " u=" << a.u;
    throw std::domain_error(os.str());
}

double fd_step(double v) { return 1e-5 * std::max(1.0, std::abs(v)); }

}  // namespace

double eval_coefficient(const ProblemSpec& spec, Coefficient which, const CoefArgs& args) {
    const CoefFn& fn = pick(spec, which);
    if (!fn) throw std::invalid_argument(std::string("ProblemSpec: coefficient ") +
                                         coef_name(which) + " is not set");
    const double v = fn(args);
    if (!std::isfinite(v)) throw_non_finite(which, args);
    return v;
}

double eval_derivative(const ProblemSpec& spec, Coefficient which, Wrt wrt,
                       const CoefArgs& args) {
    const auto it = spec.derivatives.find({which, wrt});
    if (it != spec.derivatives.end()) {
        const double v = it->second(args);
        if (!std::isfinite(v)) throw_non_finite(which, args);
        return v;
    }

    // Central finite difference on the selected slot.
    CoefArgs lo = args, hi = args;
    std::vector<double> mlo, mhi, nlo, nhi;
    double h = 0.0;
    switch (wrt.kind) {
        case Wrt::Kind::X:
            h = fd_step(args.x);
            lo.x -= h;
            hi.x += h;
            break;
        case Wrt::Kind::Y:
            h = fd_step(args.y);
            lo.y -= h;
            hi.y += h;
            break;
        case Wrt::Kind::Z:
            h = fd_step(args.z);
            lo.z -= h;
            hi.z += h;
            break;
        case Wrt::Kind::U:
            h = fd_step(args.u);
            lo.u -= h;
            hi.u += h;
            break;
        case Wrt::Kind::MStat: {
            if (wrt.index < 0 || static_cast<std::size_t>(wrt.index) >= args.m_stats.size())
                throw std::out_of_range("eval_derivative: m-statistic index out of range");
            mlo.assign(args.m_stats.begin(), args.m_stats.end());
            mhi = mlo;
            h = fd_step(mlo[static_cast<std::size_t>(wrt.index)]);
            mlo[static_cast<std::size_t>(wrt.index)] -= h;
            mhi[static_cast<std::size_t>(wrt.index)] += h;
            lo.m_stats = mlo;
            hi.m_stats = mhi;
            break;
        }
        case Wrt::Kind::NStat: {
            if (wrt.index < 0 || static_cast<std::size_t>(wrt.index) >= args.n_stats.size())
                throw std::out_of_range("eval_derivative: n-statistic index out of range");
            nlo.assign(args.n_stats.begin(), args.n_stats.end());
            nhi = nlo;
            h = fd_step(nlo[static_cast<std::size_t>(wrt.index)]);
            nlo[static_cast<std::size_t>(wrt.index)] -= h;
            nhi[static_cast<std::size_t>(wrt.index)] += h;
            lo.n_stats = nlo;
            hi.n_stats = nhi;
            break;
        }
    }
    const double v = (eval_coefficient(spec, which, hi) - eval_coefficient(spec, which, lo)) /
                     (2.0 * h);
    if (!std::isfinite(v)) throw_non_finite(which, args);
    return v;
}

double lipschitz_probe(const ProblemSpec& spec, Coefficient which, int probes,
                       std::uint64_t seed) {
    if (probes < 1) throw std::invalid_argument("lipschitz_probe: need at least one probe");
    const std::size_t dm = spec.basis_m.size(), dn = spec.basis_n.size();
    double worst = 0.0;
    auto draw = [&](std::uint64_t i, std::uint64_t slot) {
        return 2.0 * rng::uniform_from(rng::key(seed, i, slot)) - 1.0;
    };
    for (int p = 0; p < probes; ++p) {
        const auto i = static_cast<std::uint64_t>(p);
        std::vector<double> m1(dm), m2(dm), n1(dn), n2(dn);
        for (std::size_t j = 0; j < dm; ++j) {
            m1[j] = draw(i, 10 + j);
            m2[j] = m1[j] + 0.5 * draw(i, 100 + j);
        }
        for (std::size_t j = 0; j < dn; ++j) {
            n1[j] = draw(i, 40 + j);
            n2[j] = n1[j] + 0.5 * draw(i, 140 + j);
        }
        CoefArgs a1{0.5 + 0.5 * draw(i, 0), draw(i, 1), draw(i, 2), draw(i, 3),
                    spec.control_set.project(draw(i, 4)), m1, n1};
        CoefArgs a2 = a1;
        a2.x += 0.5 * draw(i, 5);
        a2.y += 0.5 * draw(i, 6);
        a2.z += 0.5 * draw(i, 7);
        a2.u = spec.control_set.project(a2.u + 0.5 * draw(i, 8));
        a2.m_stats = m2;
        a2.n_stats = n2;

        double gap2 = (a2.x - a1.x) * (a2.x - a1.x) + (a2.y - a1.y) * (a2.y - a1.y) +
                      (a2.z - a1.z) * (a2.z - a1.z) + (a2.u - a1.u) * (a2.u - a1.u);
        for (std::size_t j = 0; j < dm; ++j) gap2 += (m2[j] - m1[j]) * (m2[j] - m1[j]);
        for (std::size_t j = 0; j < dn; ++j) gap2 += (n2[j] - n1[j]) * (n2[j] - n1[j]);
        if (gap2 < 1e-16) continue;

        const double dv = std::abs(eval_coefficient(spec, which, a2) -
                                   eval_coefficient(spec, which, a1));
        worst = std::max(worst, dv / std::sqrt(gap2));
    }
    return worst;
}

namespace {

CoefFn zero_fn() {
    return [](const CoefArgs&) { return 0.0; };
}

void register_zero(ProblemSpec& spec, Coefficient which, std::initializer_list<Wrt> slots) {
    for (const Wrt& w : slots) spec.register_derivative(which, w, zero_fn());
}

}  // namespace

ProblemSpec make_gbm(double drift, double vol, double x0) {
    ProblemSpec spec;
    spec.name = "gbm";
    spec.x0 = x0;
    spec.control_set = {0.0, 1.0};
    spec.b = [drift](const CoefArgs& a) { return drift * a.x; };
    spec.sigma = [vol](const CoefArgs& a) { return vol * a.x; };
    spec.g = zero_fn();
    spec.f = zero_fn();
    spec.h = zero_fn();
    spec.phi = zero_fn();
    spec.register_derivative(Coefficient::B, Wrt::x(),
                             [drift](const CoefArgs&) { return drift; });
    spec.register_derivative(Coefficient::Sigma, Wrt::x(),
                             [vol](const CoefArgs&) { return vol; });
    register_zero(spec, Coefficient::B, {Wrt::u()});
    register_zero(spec, Coefficient::Sigma, {Wrt::u()});
    register_zero(spec, Coefficient::G, {Wrt::y(), Wrt::z(), Wrt::x(), Wrt::u()});
    register_zero(spec, Coefficient::F,
                  {Wrt::x(), Wrt::y(), Wrt::z(), Wrt::u()});
    register_zero(spec, Coefficient::H, {Wrt::x()});
    register_zero(spec, Coefficient::Phi, {Wrt::y()});
    return spec;
}

ProblemSpec make_mean_reverting(double kappa, double vol, double x0) {
    ProblemSpec spec;
    spec.name = "mean_reverting";
    spec.x0 = x0;
    spec.control_set = {0.0, 1.0};
    spec.b = [kappa](const CoefArgs& a) {
        if (a.m_stats.empty())
            throw std::invalid_argument("mean_reverting: b needs the running mean statistic");
        return kappa * (a.m_stats[0] - a.x);
    };
    spec.sigma = [vol](const CoefArgs&) { return vol; };
    spec.g = zero_fn();
    spec.f = zero_fn();
    spec.h = zero_fn();
    spec.phi = zero_fn();
    spec.register_derivative(Coefficient::B, Wrt::x(),
                             [kappa](const CoefArgs&) { return -kappa; });
    spec.register_derivative(Coefficient::B, Wrt::m(0),
                             [kappa](const CoefArgs&) { return kappa; });
    register_zero(spec, Coefficient::B, {Wrt::u(), Wrt::m(1), Wrt::m(2)});
    register_zero(spec, Coefficient::Sigma, {Wrt::x(), Wrt::u()});
    register_zero(spec, Coefficient::G, {Wrt::y(), Wrt::z(), Wrt::x(), Wrt::u()});
    register_zero(spec, Coefficient::F, {Wrt::x(), Wrt::y(), Wrt::z(), Wrt::u()});
    register_zero(spec, Coefficient::H, {Wrt::x()});
    register_zero(spec, Coefficient::Phi, {Wrt::y()});
    return spec;
}

ProblemSpec make_lq(double vol, double x0) {
    ProblemSpec spec;
    spec.name = "lq";
    spec.x0 = x0;
    spec.control_set = {};  // unconstrained
    spec.sense = OptimizeSense::Minimize;
    spec.b = [](const CoefArgs& a) { return a.u; };
    spec.sigma = [vol](const CoefArgs&) { return vol; };
    spec.g = zero_fn();
    spec.f = [](const CoefArgs& a) { return a.u * a.u; };
    spec.h = [](const CoefArgs& a) { return a.x * a.x; };
    spec.phi = zero_fn();
    spec.register_derivative(Coefficient::B, Wrt::u(), [](const CoefArgs&) { return 1.0; });
    register_zero(spec, Coefficient::B, {Wrt::x()});
    register_zero(spec, Coefficient::Sigma, {Wrt::x(), Wrt::u()});
    spec.register_derivative(Coefficient::F, Wrt::u(),
                             [](const CoefArgs& a) { return 2.0 * a.u; });
    register_zero(spec, Coefficient::F, {Wrt::x(), Wrt::y(), Wrt::z()});
    register_zero(spec, Coefficient::G, {Wrt::x(), Wrt::y(), Wrt::z(), Wrt::u()});
    spec.register_derivative(Coefficient::H, Wrt::x(),
                             [](const CoefArgs& a) { return 2.0 * a.x; });
    register_zero(spec, Coefficient::Phi, {Wrt::y()});
    return spec;
}

ProblemSpec make_portfolio_problem(std::function<double(double)> b0,
                                   std::function<double(double)> sigma0,
                                   std::function<double(double)> r0, double x0) {
    if (!b0 || !sigma0 || !r0)
        throw std::invalid_argument("make_portfolio_problem: null parameter function");
    ProblemSpec spec;
    spec.name = "portfolio";
    spec.x0 = x0;
    spec.control_set = {-5.0, 5.0};
    spec.sense = OptimizeSense::Maximize;
    spec.b = [b0](const CoefArgs& a) { return a.u * b0(a.t) * a.x; };
    spec.sigma = [sigma0](const CoefArgs& a) { return a.u * sigma0(a.t) * a.x; };
    spec.g = [r0](const CoefArgs& a) {
        if (a.n_stats.empty())
            throw std::invalid_argument("portfolio: g needs the mean statistic of the law of Y");
        return -r0(a.t) * a.n_stats[0] - 0.5 * a.z * a.z;
    };
    spec.f = zero_fn();
    spec.h = zero_fn();
    spec.phi = [](const CoefArgs& a) { return a.y; };

    spec.register_derivative(Coefficient::B, Wrt::x(),
                             [b0](const CoefArgs& a) { return a.u * b0(a.t); });
    spec.register_derivative(Coefficient::B, Wrt::u(),
                             [b0](const CoefArgs& a) { return b0(a.t) * a.x; });
    spec.register_derivative(Coefficient::Sigma, Wrt::x(),
                             [sigma0](const CoefArgs& a) { return a.u * sigma0(a.t); });
    spec.register_derivative(Coefficient::Sigma, Wrt::u(),
                             [sigma0](const CoefArgs& a) { return sigma0(a.t) * a.x; });
    spec.register_derivative(Coefficient::G, Wrt::z(),
                             [](const CoefArgs& a) { return -a.z; });
    spec.register_derivative(Coefficient::G, Wrt::n(0),
                             [r0](const CoefArgs& a) { return -r0(a.t); });
    register_zero(spec, Coefficient::G, {Wrt::x(), Wrt::y(), Wrt::u(), Wrt::n(1), Wrt::n(2)});
    register_zero(spec, Coefficient::F, {Wrt::x(), Wrt::y(), Wrt::z(), Wrt::u()});
    register_zero(spec, Coefficient::H, {Wrt::x()});
    spec.register_derivative(Coefficient::Phi, Wrt::y(), [](const CoefArgs&) { return 1.0; });
    register_zero(spec, Coefficient::Phi, {Wrt::n(0), Wrt::n(1), Wrt::n(2)});
    return spec;
}

ProblemSpec make_portfolio_problem(double b0, double sigma0, double r0, double x0) {
    if (!(sigma0 > 0.0))
        throw std::invalid_argument("make_portfolio_problem: sigma0 must be positive");
    return make_portfolio_problem([b0](double) { return b0; },
                                  [sigma0](double) { return sigma0; },
                                  [r0](double) { return r0; }, x0);
}

}  // namespace mfc
