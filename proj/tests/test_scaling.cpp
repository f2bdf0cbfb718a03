#include <cmath>
#include <numbers>

#include "doctest.h"
#include "otoc/scaling.hpp"

using namespace otoc;
using namespace otoc::scaling;

namespace {

SimCurve analytic_curve() {
    std::vector<double> t, n;
    for (int i = 0; i <= 200; ++i) {
        const double x = 0.1 * i;
        t.push_back(x);
        n.push_back(1.0 + 12.0 * std::pow(x, 3) / (1.0 + 0.002 * std::pow(x, 3)));
    }
    return SimCurve(t, n);
}

std::vector<double> exp_times() { return {1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0}; }

}  // namespace

TEST_SUITE("scaling") {

TEST_CASE("regime rows by alpha relative to d") {
    CHECK(classify_regime(1.5, 3).id == RegimeId::stretched_exponential);
    CHECK(classify_regime(3.0, 3).row == 2);
    CHECK(classify_regime(3.2, 3).id == RegimeId::power_law);
    CHECK(classify_regime(3.5, 3).id == RegimeId::t_log_t);
    CHECK(classify_regime(3.7, 3).id == RegimeId::linear_power_tail);
    CHECK(classify_regime(4.0, 3).row == 6);
    CHECK(classify_regime(2.0, 1).row == 6);
    CHECK(classify_regime(5.0, 3).row == 7);
    CHECK(classify_regime(0.5, 1).row == 1);
    CHECK_THROWS_AS(classify_regime(1.0, 3), ValidationError);
    CHECK_THROWS_AS(classify_regime(2.0, 0), ValidationError);
}

TEST_CASE("stretched exponential constants") {
    const auto r = classify_regime(1.5, 3);
    CHECK(*r.B == doctest::Approx(0.46209812037329684));
    CHECK(*r.eta == doctest::Approx(1.0));
    CHECK(!classify_regime(3.2, 3).B);
}

TEST_CASE("global OTOC growth forms") {
    const double t = 7.0;
    CHECK(log_predicted_global_otoc(classify_regime(3.2, 3), t) == doctest::Approx(16.0 * std::log(t)));
    CHECK(log_predicted_global_otoc(classify_regime(5.0, 3), t) == doctest::Approx(3.0 * std::log(t)));
    CHECK(predicted_global_otoc(classify_regime(3.0, 3), t) ==
          doctest::Approx(std::pow(t, std::log2(t) / 2.0)));
    const auto tl = classify_regime(3.5, 3);
    CHECK(predicted_global_otoc(tl, t) == doctest::Approx(std::pow(t * std::log(t), 7.0)));
    CHECK_THROWS_AS(light_cone_radius(tl, 0.5), ValidationError);
}

TEST_CASE("tail caveat only off one dimension") {
    CHECK(classify_regime(1.5, 1).caveats.empty());
    CHECK(classify_regime(1.7, 2).caveats == std::vector<std::string>{"tail-numerical-support-d1-only"});
    CHECK(classify_regime(5.0, 3).caveats.empty());
    const auto j = classify_regime(3.2, 3).to_json();
    CHECK(j["row"] == 3);
    CHECK(j["B"].is_null());
}

TEST_CASE("fit recovers the generating parameters") {
    const auto sim = analytic_curve();
    for (double J : {0.8, 1.76, 3.0})
        for (double shift : {-2.0, -0.87, 0.5}) {
            std::vector<double> t;
            for (double x : exp_times()) t.push_back(x / J + shift + 0.2);
            const auto exp = synthetic_experiment(sim, J, shift, t);
            const auto fit = fit_experiment(sim, exp);
            CHECK(fit.J == doctest::Approx(J).epsilon(1e-4));
            CHECK(fit.shift == doctest::Approx(shift).epsilon(1e-3));
            CHECK(fit.residual < 1e-8);
        }
}

TEST_CASE("shifting experimental times moves only the shift") {
    const auto sim = analytic_curve();
    std::vector<double> t;
    for (double x : exp_times()) t.push_back(x / 1.76 - 0.87 + 0.2);
    const auto exp = synthetic_experiment(sim, 1.76, -0.87, t, 0.02, 3);
    auto moved = exp;
    for (auto& x : moved.t) x += 1.25;
    const auto a = fit_experiment(sim, exp);
    const auto b = fit_experiment(sim, moved);
    CHECK(b.J == doctest::Approx(a.J).epsilon(1e-4));
    CHECK(b.shift == doctest::Approx(a.shift + 1.25).epsilon(1e-4));
    CHECK(a.J == doctest::Approx(1.76).epsilon(0.05));
    REQUIRE(a.covariance);
    CHECK((*a.covariance)[0][0] > 0.0);
}

TEST_CASE("objective outside the simulated window") {
    const auto sim = analytic_curve();
    mqc::ExperimentSeries exp;
    exp.t = {1, 2, 3};
    exp.cluster_size = {2, 3, 4};
    exp.error.resize(3);
    CHECK(!fit_objective(sim, exp, 100.0, 0.0));
    CHECK(!sim.log_size(25.0));
    CHECK(sim.log_size(0.0).value() == doctest::Approx(0.0));
}

TEST_CASE("fit input errors") {
    const auto sim = analytic_curve();
    mqc::ExperimentSeries exp;
    exp.t = {1, 2};
    exp.cluster_size = {2, 3};
    exp.error.resize(2);
    CHECK_THROWS_AS(fit_experiment(sim, exp), TooFewPointsError);
    exp.t = {100, 200, 300};
    exp.cluster_size = {2, 3, 4};
    exp.error.resize(3);
    CHECK_THROWS_AS(fit_experiment(sim, exp), WindowMismatchError);
    CHECK_THROWS_AS(SimCurve({0, 1, 2}, {1, 2, 3}), ValidationError);
    CHECK_THROWS_AS(SimCurve({0, 1, 1, 2}, {1, 2, 3, 4}), ValidationError);
}

TEST_CASE("fit report carries regime caveats") {
    FitResult f;
    f.J = 1.0;
    f.points = 5;
    const auto j = fit_report(f, classify_regime(3.0, 3));
    CHECK(j["caveats"].size() == 1);
    CHECK(j["covariance"].is_null());
    CHECK(j["regime"]["row"] == 2);
}

}
