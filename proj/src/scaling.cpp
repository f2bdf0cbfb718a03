#include "otoc/scaling.hpp"

#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "otoc/parallel.hpp"
#include "otoc/rng.hpp"

namespace otoc::scaling {

namespace {

constexpr const char* kModule = "scaling-fit";

bool at(double alpha, double x) { return std::abs(alpha - x) <= kBoundaryTolerance * std::max(1.0, std::abs(x)); }

}  // namespace

std::string to_string(RegimeId id) {
    switch (id) {
        case RegimeId::stretched_exponential: return "stretched-exponential";
        case RegimeId::alpha_equals_d: return "alpha-equals-d";
        case RegimeId::power_law: return "power-law";
        case RegimeId::t_log_t: return "t-log-t";
        case RegimeId::linear_power_tail: return "linear-power-tail";
        case RegimeId::linear_log_broadening: return "linear-log-broadening";
        case RegimeId::linear_diffusive: return "linear-diffusive";
    }
    return "?";
}

ScalingRegime classify_regime(double alpha, int d) {
    if (d < 1) throw ValidationError(kModule, "dimension must be >= 1");
    if (std::isnan(alpha)) throw ValidationError(kModule, "alpha is NaN");
    const double dd = d;
    if (alpha < dd / 2 && !at(alpha, dd / 2))
        throw ValidationError(kModule, "alpha below d/2: no light-cone regime applies");

    ScalingRegime r;
    r.alpha = alpha;
    r.d = d;
    if (at(alpha, dd)) {
        r.id = RegimeId::alpha_equals_d;
        r.interval = "d";
        r.light_cone = "exp((ln t)^2 / (4 d ln 2))";
        r.scaling_function = "C(r / t^{log2(t) / (4d)})";
        r.tail = "r^{-2 alpha}";
        r.global_otoc = "t^{log2(t) / 2}";
    } else if (at(alpha, dd + 0.5)) {
        r.id = RegimeId::t_log_t;
        r.interval = "d+1/2";
        r.light_cone = "t ln t";
        r.scaling_function = "C(r / (t ln t))";
        r.tail = "r^{-2 alpha}";
        r.global_otoc = "(t ln t)^{2 alpha}";
    } else if (at(alpha, dd + 1)) {
        r.id = RegimeId::linear_log_broadening;
        r.interval = "d+1";
        r.light_cone = "v_B t";
        r.scaling_function = "C((r - v_B t) / (t ln t)^{1/2})";
        r.tail = "erf";
        r.global_otoc = "t^d";
    } else if (alpha < dd) {
        r.id = RegimeId::stretched_exponential;
        r.interval = "[d/2, d)";
        r.B = dd * std::numbers::ln2 / (2 * (alpha - dd) * (alpha - dd));
        r.eta = std::log2(dd / alpha);
        r.light_cone = "exp(B t^eta)";
        r.scaling_function = "C(r / exp(B t^eta))";
        r.tail = "r^{-2 alpha}";
        r.global_otoc = "exp(2 alpha B t^eta)";
    } else if (alpha < dd + 0.5) {
        r.id = RegimeId::power_law;
        r.interval = "(d, d+1/2)";
        r.light_cone = "t^{1/(2 alpha - 2d)}";
        r.scaling_function = "C(r / t^{1/(2 alpha - 2d)})";
        r.tail = "r^{-2 alpha}";
        r.global_otoc = "t^{alpha/(alpha - d)}";
    } else if (alpha < dd + 1) {
        r.id = RegimeId::linear_power_tail;
        r.interval = "(d+1/2, d+1)";
        r.light_cone = "v_B t";
        r.scaling_function = "C((r - v_B t) / t^{1/(2 alpha - 2d)})";
        r.tail = "r^{-(2 alpha - 2d)}";
        r.global_otoc = "t^d";
    } else {
        r.id = RegimeId::linear_diffusive;
        r.interval = "(d+1, inf)";
        r.light_cone = "v_B t";
        r.scaling_function = "C((r - v_B t) / t^{1/2})";
        r.tail = "erf";
        r.global_otoc = "t^d";
    }
    r.row = static_cast<int>(r.id) + 1;
    if (d > 1 && r.tail != "erf") r.caveats.emplace_back("tail-numerical-support-d1-only");
    return r;
}

nlohmann::json ScalingRegime::to_json() const {
    nlohmann::json j{{"regime", to_string(id)},   {"row", row},
                     {"alpha", alpha},            {"d", d},
                     {"interval", interval},      {"light_cone", light_cone},
                     {"scaling_function", scaling_function}, {"tail", tail},
                     {"global_otoc", global_otoc}, {"caveats", caveats}};
    j["B"] = B ? nlohmann::json(*B) : nlohmann::json(nullptr);
    j["eta"] = eta ? nlohmann::json(*eta) : nlohmann::json(nullptr);
    return j;
}

double light_cone_radius(const ScalingRegime& r, double t) {
    if (!(t > 1)) throw ValidationError(kModule, "asymptotic forms need t > 1");
    switch (r.id) {
        case RegimeId::stretched_exponential: return std::exp(*r.B * std::pow(t, *r.eta));
        case RegimeId::alpha_equals_d: return std::exp(std::log(t) * std::log(t) / (4 * r.d * std::numbers::ln2));
        case RegimeId::power_law: return std::pow(t, 1 / (2 * r.alpha - 2.0 * r.d));
        case RegimeId::t_log_t: return t * std::log(t);
        default: return t;
    }
}

double log_predicted_global_otoc(const ScalingRegime& r, double t) {
    const double R = light_cone_radius(r, t);
    switch (r.id) {
        case RegimeId::stretched_exponential:
            return 2 * r.alpha * *r.B * std::pow(t, *r.eta);
        case RegimeId::alpha_equals_d:
            // t^{log2(t)/2}
            return 0.5 * std::log(t) * std::log(t) / std::numbers::ln2;
        case RegimeId::power_law:
            return r.alpha / (r.alpha - r.d) * std::log(t);
        case RegimeId::t_log_t:
            return 2 * r.alpha * std::log(R);
        default:
            return r.d * std::log(t);
    }
}

double predicted_global_otoc(const ScalingRegime& r, double t) { return std::exp(log_predicted_global_otoc(r, t)); }

struct SimCurve::Impl {
    boost::math::interpolators::pchip<std::vector<double>> spline;
};

SimCurve::SimCurve(std::vector<double> times, std::vector<double> sizes) : t_(std::move(times)) {
    if (t_.size() != sizes.size()) throw ValidationError(kModule, "time and size columns differ in length");
    if (t_.size() < 4) throw ValidationError(kModule, "simulation curve needs at least 4 samples");
    for (std::size_t i = 0; i < t_.size(); ++i) {
        if (!(sizes[i] > 0)) throw ValidationError(kModule, "simulated sizes must be positive");
        if (i > 0 && !(t_[i] > t_[i - 1])) throw ValidationError(kModule, "simulation times must increase");
        logn_.push_back(std::log(sizes[i]));
    }
    auto x = t_;
    auto y = logn_;
    impl_ = std::make_shared<const Impl>(Impl{boost::math::interpolators::pchip<std::vector<double>>(std::move(x), std::move(y))});
}

SimCurve::SimCurve(const spread::TimeSeries& s) : SimCurve(s.times, s.n_op_mean) {}

std::optional<double> SimCurve::log_size(double t) const {
    const double eps = 1e-12 * std::max(1.0, std::abs(t_.back()));
    if (t < t_.front() - eps || t > t_.back() + eps) return std::nullopt;
    return impl_->spline(std::clamp(t, t_.front(), t_.back()));
}

std::optional<double> fit_objective(const SimCurve& sim, const mqc::ExperimentSeries& exp, double J, double shift) {
    double s = 0;
    for (std::size_t i = 0; i < exp.size(); ++i) {
        const auto v = sim.log_size(J * (exp.t[i] - shift));
        if (!v) return std::nullopt;
        const double r = *v - std::log(exp.cluster_size[i]);
        s += r * r;
    }
    return s;
}

FitResult fit_experiment(const SimCurve& sim, const mqc::ExperimentSeries& exp, const FitOptions& o) {
    if (exp.size() < 3) throw TooFewPointsError(kModule, "fit needs at least 3 experimental points");
    if (!(o.J_min > 0) || !(o.J_max > o.J_min) || !(o.shift_max > o.shift_min) || o.grid_J < 2 || o.grid_shift < 2)
        throw ValidationError(kModule, "invalid fit search box");
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto S = [&](double logJ, double shift) {
        const auto v = fit_objective(sim, exp, std::exp(logJ), shift);
        return v ? *v : inf;
    };

    const double lj0 = std::log(o.J_min), lj1 = std::log(o.J_max);
    const double dlj = (lj1 - lj0) / (o.grid_J - 1), ds = (o.shift_max - o.shift_min) / (o.grid_shift - 1);
    const std::size_t cells = static_cast<std::size_t>(o.grid_J) * o.grid_shift;
    std::vector<double> grid(cells);
    parallel_for(cells, o.threads, [&](std::size_t k) {
        grid[k] = S(lj0 + dlj * static_cast<double>(k / o.grid_shift), o.shift_min + ds * static_cast<double>(k % o.grid_shift));
    });
    const auto best = std::min_element(grid.begin(), grid.end()) - grid.begin();
    if (!std::isfinite(grid[best]))
        throw WindowMismatchError(kModule, "no (J, shift) in the search box maps the experimental window inside the simulation");

    double lj = lj0 + dlj * static_cast<double>(best / o.grid_shift);
    double sh = o.shift_min + ds * static_cast<double>(best % o.grid_shift);
    double cur = grid[best];
    double wj = dlj, ws = ds;
    for (int round = 0; round < o.refine_rounds * 10 && (wj > 1e-12 || ws > 1e-12); ++round) {
        double bl = lj, bs = sh, bv = cur;
        for (int a = -2; a <= 2; ++a)
            for (int b = -2; b <= 2; ++b) {
                if (a == 0 && b == 0) continue;
                const double v = S(lj + a * wj / 2, sh + b * ws / 2);
                if (v < bv) bv = v, bl = lj + a * wj / 2, bs = sh + b * ws / 2;
            }
        if (bv < cur) {
            lj = bl, sh = bs, cur = bv;
        } else {
            wj /= 2;
            ws /= 2;
        }
    }

    FitResult fit;
    fit.J = std::exp(lj);
    fit.shift = sh;
    fit.residual = cur;
    fit.points = exp.size();
    if (lj <= lj0 + dlj || lj >= lj1 - dlj || sh <= o.shift_min + ds || sh >= o.shift_max - ds)
        fit.caveats.emplace_back("optimum-near-search-boundary");

    // Gauss-Newton covariance 2 sigma^2 H^{-1} from a finite-difference Hessian in (J, shift).
    auto SJ = [&](double J, double s) {
        const auto v = fit_objective(sim, exp, J, s);
        return v ? *v : inf;
    };
    const double hJ = 1e-4 * fit.J, hs = 1e-4;
    const double f0 = cur;
    const double fpp = SJ(fit.J + hJ, sh + hs), fpm = SJ(fit.J + hJ, sh - hs);
    const double fmp = SJ(fit.J - hJ, sh + hs), fmm = SJ(fit.J - hJ, sh - hs);
    const double hjj = (SJ(fit.J + hJ, sh) - 2 * f0 + SJ(fit.J - hJ, sh)) / (hJ * hJ);
    const double hss = (SJ(fit.J, sh + hs) - 2 * f0 + SJ(fit.J, sh - hs)) / (hs * hs);
    const double hjs = (fpp - fpm - fmp + fmm) / (4 * hJ * hs);
    const double det = hjj * hss - hjs * hjs;
    if (std::isfinite(det) && det > 0 && hjj > 0) {
        const double sigma2 = fit.points > 2 ? cur / static_cast<double>(fit.points - 2) : 0.0;
        const double c = 2 * sigma2 / det;
        fit.covariance = std::array<std::array<double, 2>, 2>{{{c * hss, -c * hjs}, {-c * hjs, c * hjj}}};
    } else {
        fit.caveats.emplace_back("covariance-unavailable");
    }
    return fit;
}

nlohmann::json fit_report(const FitResult& fit, const std::optional<ScalingRegime>& regime) {
    nlohmann::json j{{"J", fit.J}, {"shift", fit.shift}, {"residual", fit.residual}, {"points", fit.points}};
    if (fit.covariance) {
        const auto& c = *fit.covariance;
        j["covariance"] = {{c[0][0], c[0][1]}, {c[1][0], c[1][1]}};
    } else {
        j["covariance"] = nullptr;
    }
    j["regime"] = regime ? regime->to_json() : nlohmann::json(nullptr);
    auto caveats = fit.caveats;
    if (regime) caveats.insert(caveats.end(), regime->caveats.begin(), regime->caveats.end());
    j["caveats"] = caveats;
    return j;
}

mqc::ExperimentSeries synthetic_experiment(const SimCurve& sim, double J, double shift, const std::vector<double>& t,
                                           double log_noise, std::uint64_t seed) {
    mqc::ExperimentSeries s;
    s.source = "synthetic";
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto v = sim.log_size(J * (t[i] - shift));
        if (!v) throw WindowMismatchError(kModule, "synthetic time maps outside the simulation window");
        s.t.push_back(t[i]);
        s.cluster_size.push_back(std::exp(*v + log_noise * counter_normal(seed, i)));
        s.error.emplace_back(std::nullopt);
    }
    return s;
}

}  // namespace otoc::scaling
