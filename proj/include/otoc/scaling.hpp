#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "otoc/error.hpp"
#include "otoc/mqc.hpp"
#include "otoc/spread.hpp"

namespace otoc::scaling {

// Light-cone regimes of the long-range Brownian circuit model, ordered by
// the interaction exponent alpha relative to the dimension d.
enum class RegimeId {
    stretched_exponential,  // [d/2, d)
    alpha_equals_d,         // d
    power_law,              // (d, d + 1/2)
    t_log_t,                // d + 1/2
    linear_power_tail,      // (d + 1/2, d + 1)
    linear_log_broadening,  // d + 1
    linear_diffusive,       // (d + 1, inf)
};

std::string to_string(RegimeId id);

struct ScalingRegime {
    RegimeId id{};
    int row = 0;  // 1..7
    double alpha = 0;
    int d = 0;
    std::string interval;
    std::string light_cone;
    std::string scaling_function;
    std::string tail;
    std::string global_otoc;
    std::optional<double> B;    // d ln2 / (2 (alpha - d)^2), first row only
    std::optional<double> eta;  // log2(d / alpha), first row only
    std::vector<std::string> caveats;

    nlohmann::json to_json() const;
};

constexpr double kBoundaryTolerance = 1e-12;

ScalingRegime classify_regime(double alpha, int d);

// Light-cone radius R(t) with v_B = 1.
double light_cone_radius(const ScalingRegime& regime, double t);
// Leading time dependence of the global OTOC, up to a constant: R^{2 alpha}
// where the front carries the 1/r^{2 alpha} tail, (v_B t)^d otherwise.
double log_predicted_global_otoc(const ScalingRegime& regime, double t);
double predicted_global_otoc(const ScalingRegime& regime, double t);

class WindowMismatchError : public ValidationError {
public:
    using ValidationError::ValidationError;
};
class TooFewPointsError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Monotone piecewise-cubic interpolation of log N_op against simulation
// time; evaluation outside the sampled window returns nullopt.
class SimCurve {
public:
    SimCurve(std::vector<double> times, std::vector<double> sizes);
    explicit SimCurve(const spread::TimeSeries& series);
    double t_min() const { return t_.front(); }
    double t_max() const { return t_.back(); }
    std::optional<double> log_size(double t) const;

private:
    std::vector<double> t_, logn_;
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

struct FitOptions {
    double J_min = 0.2, J_max = 10.0;
    double shift_min = -5.0, shift_max = 5.0;
    int grid_J = 80, grid_shift = 101;
    int refine_rounds = 60;
    unsigned threads = 1;
};

struct FitResult {
    double J = 0;
    double shift = 0;
    double residual = 0;  // sum of squared log residuals at the optimum
    std::optional<std::array<std::array<double, 2>, 2>> covariance;
    std::size_t points = 0;
    std::vector<std::string> caveats;
};

// Sum over experimental points of (log N_sim(J (t - shift)) - log N_exp(t))^2,
// or nullopt if any mapped time leaves the simulated window.
std::optional<double> fit_objective(const SimCurve& sim, const mqc::ExperimentSeries& exp, double J, double shift);

FitResult fit_experiment(const SimCurve& sim, const mqc::ExperimentSeries& exp, const FitOptions& options = {});

nlohmann::json fit_report(const FitResult& fit, const std::optional<ScalingRegime>& regime);

// Experimental series sampled from the simulation curve at the given
// experimental times, optionally with multiplicative log-normal noise.
mqc::ExperimentSeries synthetic_experiment(const SimCurve& sim, double J, double shift, const std::vector<double>& t,
                                           double log_noise = 0.0, std::uint64_t seed = 0);

}  // namespace otoc::scaling
