#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "otoc/mqc.hpp"

using namespace otoc;
using namespace otoc::mqc;

namespace {

MQCSpectrum gaussian(double K, int n_max) {
    auto s = MQCSpectrum::zeros(n_max);
    for (std::size_t i = 0; i < s.n_values.size(); ++i) s.g[i] = std::exp(-double(s.n_values[i]) * s.n_values[i] / K);
    s.normalize();
    return s;
}

}  // namespace

TEST_SUITE("mqc") {

TEST_CASE("Fourier round trip") {
    auto s = MQCSpectrum::zeros(6);
    for (std::size_t i = 0; i < s.g.size(); ++i) s.g[i] = 1.0 / (1.0 + std::abs(s.n_values[i])) + 0.01 * i;
    const auto sweep = phase_sweep_from_gn(s, sweep_size(6) + 4);
    const auto back = gn_from_phase_sweep(sweep, 1e300);
    CHECK(back.valid);
    for (int n = -6; n <= 6; ++n) CHECK(std::abs(back.spectrum.at(n) - s.at(n)) < 1e-12);
    for (int n = 7; n <= back.spectrum.max_order(); ++n) CHECK(std::abs(back.spectrum.at(n)) < 1e-12);
}

TEST_CASE("cos 2 phi has weight one half at n = 2 and n = -2") {
    const std::size_t M = 9;
    std::vector<std::complex<double>> samples(M);
    for (std::size_t k = 0; k < M; ++k) samples[k] = std::cos(2.0 * 2.0 * std::numbers::pi * k / M);
    const auto r = gn_from_phase_sweep(samples);
    CHECK(r.spectrum.at(2) == doctest::Approx(0.5));
    CHECK(r.spectrum.at(-2) == doctest::Approx(0.5));
    CHECK(std::abs(r.spectrum.at(0)) < 1e-14);
    CHECK(r.imag_residue < 1e-14);
}

TEST_CASE("mass at the edge order is reported as aliasing") {
    const std::size_t M = 7;
    std::vector<std::complex<double>> samples(M);
    for (std::size_t k = 0; k < M; ++k) samples[k] = std::cos(3.0 * 2.0 * std::numbers::pi * k / M);
    CHECK_THROWS_AS(gn_from_phase_sweep(samples), AliasingError);
}

TEST_CASE("Gaussian spectrum moment and cluster fit") {
    CHECK(second_moment(gaussian(100.0, 50)) == doctest::Approx(49.99999999769938).epsilon(1e-12));
    const auto fit = cluster_size_fit(gaussian(64.0, 40));
    CHECK(fit.K == doctest::Approx(64.0).epsilon(1e-9));
    CHECK(fit.residual < 1e-15);
}

TEST_CASE("a delta spectrum has no cluster fit") {
    auto s = MQCSpectrum::zeros(4);
    s.g[4] = 1.0;
    s.normalize();
    CHECK_THROWS_AS(cluster_size_fit(s), NoFitError);
    const auto j = analysis_json(s);
    CHECK(j["K"].is_null());
    CHECK(j["second_moment"].get<double>() == 0.0);
}

TEST_CASE("weak polarization flag past the cap") {
    CHECK(analysis_flags(1e4).empty());
    CHECK(analysis_flags(2e5) == std::vector<std::string>{"weak-polarization-invalid"});
}

TEST_CASE("second moment requires unit sum") {
    auto s = MQCSpectrum::zeros(2);
    s.g = {1, 1, 1, 1, 1};
    CHECK_THROWS_AS(second_moment(s), ValidationError);
    s.normalize();
    CHECK(second_moment(s) == doctest::Approx(2.0));
    auto z = MQCSpectrum::zeros(2);
    CHECK_THROWS_AS(z.normalize(), ValidationError);
}

TEST_CASE("g_n csv round trip groups rows by label") {
    const auto a = gaussian(10.0, 4);
    auto b = gaussian(20.0, 4);
    std::stringstream io;
    write_gn_csv(io, "t", 0.5, a);
    write_gn_csv(io, "t", 1.5, b, false);
    std::string label;
    const auto back = read_gn_csv(io, &label);
    CHECK(label == "t");
    REQUIRE(back.size() == 2);
    CHECK(back[1].label == 1.5);
    for (int n = -4; n <= 4; ++n) CHECK(back[0].spectrum.at(n) == a.at(n));
    std::istringstream bad("t,n,g_n\n0,x,1\n");
    CHECK_THROWS_AS(read_gn_csv(bad), MalformedRowError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_gn_csv(empty), EmptyInputError);
}

TEST_CASE("experiment csv parsing and errors") {
    std::istringstream ok("t_ms,cluster_size,err\n0.4,10,1\n0.8,30,\n");
    const auto s = parse_experiment(ok);
    REQUIRE(s.size() == 2);
    CHECK(s.t[1] == doctest::Approx(2.0));
    CHECK(s.error[0].value() == 1.0);
    CHECK(!s.error[1]);
    std::stringstream io;
    write_experiment_csv(io, s);
    const auto back = parse_experiment(io);
    CHECK(back.t == s.t);
    CHECK(back.cluster_size == s.cluster_size);

    std::istringstream unsorted("t_ms,cluster_size\n1,2\n0.5,3\n");
    CHECK_THROWS_AS(parse_experiment(unsorted), UnsortedTimesError);
    std::istringstream nonpos("t_ms,cluster_size\n1,0\n");
    CHECK_THROWS_AS(parse_experiment(nonpos), NonPositiveSizeError);
    std::istringstream header_only("t_ms,cluster_size\n");
    CHECK_THROWS_AS(parse_experiment(header_only), EmptyInputError);
    std::istringstream bad_header("time,size\n1,2\n");
    CHECK_THROWS_AS(parse_experiment(bad_header), MalformedRowError);
    CHECK_THROWS_AS(load_experiment("/nonexistent/file.csv"), Error);
}

}
