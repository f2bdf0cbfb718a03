#include <cmath>
#include <sstream>

#include "doctest.h"
#include "otoc/error.hpp"
#include "otoc/kn_space.hpp"

using namespace otoc;
using namespace otoc::kn;

TEST_SUITE("kn") {

TEST_CASE("Q values against exact references") {
    CHECK(q_exact(1, 0) == 1);
    CHECK(q_exact(2, 2) == 1);
    CHECK(q_exact(4, 0) == 19);
    CHECK(q_exact(5, 1) == 45);
    CHECK(q_exact(30, 0) == 18252025766941ULL);
    CHECK(q_exact(30, 7) == 5460585963300ULL);
    CHECK(q_exact(30, 30) == 1);
    CHECK(q_exact(3, 4) == 0);
    CHECK(std::isinf(log_q(3, 4)));
}

TEST_CASE("Q over n sums to 3^K") {
    for (int K = 0; K <= 30; ++K) {
        unsigned __int128 sum = 0;
        for (int n = -K; n <= K; ++n) sum += q_exact(K, n);
        unsigned __int128 pow3 = 1;
        for (int i = 0; i < K; ++i) pow3 *= 3;
        CHECK(sum == pow3);
    }
}

TEST_CASE("Vandermonde identity is exact") {
    for (int m = 0; m <= 30; ++m)
        for (int n = 0; m + n <= 30; ++n)
            for (int r = 0; r <= m + n; ++r) {
                std::uint64_t s = 0;
                for (int k = 0; k <= r; ++k)
                    if (k <= m && r - k <= n) s += binomial_exact(m, k) * binomial_exact(n, r - k);
                REQUIRE(s == binomial_exact(m + n, r));
            }
}

TEST_CASE("log-space Q matches the integer value") {
    for (int K = 0; K <= 30; ++K)
        for (int n = -K; n <= K; ++n)
            REQUIRE(std::abs(log_q(K, n) - std::log(static_cast<double>(q_exact(K, n)))) < 1e-10);
}

TEST_CASE("transition rates") {
    const auto r1 = transition_rates(1, 0, 6);
    CHECK(r1.grow_up == doctest::Approx(1.0));
    CHECK(r1.grow_down == doctest::Approx(1.0));
    CHECK(r1.shrink_up == doctest::Approx(0.0));
    CHECK(r1.shrink_down == doctest::Approx(0.0));
    const auto r3 = transition_rates(3, 1, 6);
    CHECK(r3.grow_up == doctest::Approx(0.9));
    CHECK(r3.grow_down == doctest::Approx(1.5));
    CHECK(r3.shrink_up == doctest::Approx(0.0));
    CHECK(r3.shrink_down == doctest::Approx(0.4));
    const auto top = transition_rates(6, 0, 6);
    CHECK(top.grow_up == 0.0);
    CHECK(top.grow_down == 0.0);
}

TEST_CASE("stationary laws for N = 6 and N = 8") {
    const auto s6 = mqc_from_kn(KnChain(6).stationary());
    CHECK(s6.at(0) == doctest::Approx(0.4140625).epsilon(1e-10));
    CHECK(s6.at(2) == doctest::Approx(0.248046875).epsilon(1e-10));
    CHECK(second_moment(s6) == doctest::Approx(3.5).epsilon(1e-10));
    const auto d8 = KnChain(8).stationary();
    CHECK(d8.k_mean() == doctest::Approx(6.0).epsilon(1e-10));
    const auto s8 = mqc_from_kn(d8);
    CHECK(s8.at(0) == doctest::Approx(0.3671875).epsilon(1e-10));
    CHECK(s8.at(2) == doctest::Approx(0.244140625).epsilon(1e-10));
    CHECK(second_moment(s8) == doctest::Approx(4.5).epsilon(1e-10));
}

TEST_CASE("probability is conserved and only even orders appear") {
    for (auto mode : {Mode::jump_chain, Mode::continuous}) {
        EvolveOptions o;
        o.mode = mode;
        o.dt = 0.3;
        const auto series = evolve_master(15, 40, o);
        for (const auto& d : series) {
            REQUIRE(std::abs(d.total() - 1.0) < 1e-12);
            for (int K = 1; K <= 15; ++K)
                for (int n = -15; n <= 15; ++n)
                    if (n % 2 != 0 || std::abs(n) > K) REQUIRE(d.at(K, n) == 0.0);
        }
    }
}

TEST_CASE("continuous propagation composes") {
    KnChain chain(10);
    const auto d0 = KnDistribution::initial(10);
    const auto a = chain.propagate(chain.propagate(d0, 0.4), 0.6);
    const auto b = chain.propagate(d0, 1.0);
    for (std::size_t i = 0; i < a.raw().size(); ++i) REQUIRE(std::abs(a.raw()[i] - b.raw()[i]) < 1e-12);
}

TEST_CASE("series csv has a row per step") {
    const auto s = otoc_series_kn(6, 5);
    CHECK(s.step.size() == 6);
    CHECK(s.k_mean.front() == 1.0);
    std::ostringstream out;
    s.write_csv(out);
    const auto text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}

TEST_CASE("invalid sizes are rejected") {
    CHECK_THROWS_AS(KnChain(0), ValidationError);
    CHECK_THROWS_AS(evolve_master(5, -1), ValidationError);
}

}
