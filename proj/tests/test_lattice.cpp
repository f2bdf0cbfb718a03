#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "otoc/error.hpp"
#include "otoc/lattice.hpp"

using namespace otoc;
using namespace otoc::lattice;

namespace {

LatticeSpec fcc_spec(int L, double a = 1.0, Boundary b = Boundary::open) {
    LatticeSpec s;
    s.kind = LatticeKind::fcc;
    s.linear_size = L;
    s.lattice_constant_nm = a;
    s.boundary = b;
    return s;
}

}  // namespace

TEST_SUITE("lattice") {

TEST_CASE("chain positions are multiples of the spacing") {
    LatticeSpec s;
    s.kind = LatticeKind::chain;
    s.linear_size = 5;
    s.lattice_constant_nm = 0.5;
    const auto sites = build_lattice(s);
    REQUIRE(sites.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(sites.position(i)[0] == doctest::Approx(0.5 * i));
        CHECK(sites.position(i)[1] == 0.0);
    }
    CHECK(sites.central_occupied_site() == 2);
}

TEST_CASE("fcc site count, nearest neighbour distance and coordination") {
    const double a = 0.67 * std::sqrt(2.0);
    const auto sites = build_lattice(fcc_spec(2, a));
    CHECK(sites.size() == 32);
    CHECK(fcc_spec(2, a).nearest_neighbor_nm() == doctest::Approx(0.67));

    const auto periodic = build_lattice(fcc_spec(3, a, Boundary::periodic));
    double dmin = 1e300;
    for (std::size_t j = 1; j < periodic.size(); ++j) dmin = std::min(dmin, periodic.distance(0, j));
    CHECK(dmin == doctest::Approx(0.67));
    for (std::size_t i : {std::size_t{0}, std::size_t{17}, periodic.size() - 1}) {
        int coordination = 0;
        for (std::size_t j = 0; j < periodic.size(); ++j)
            if (j != i && std::abs(periodic.distance(i, j) - 0.67) < 1e-9) ++coordination;
        CHECK(coordination == 12);
    }
}

TEST_CASE("rate kernel scaling, magic angle and cutoff") {
    CouplingKernel k;
    k.alpha = 3.0;
    k.prefactor = CouplingKernel::unit_rate_prefactor(3.0, 0.67);
    CHECK(rate_for_displacement({0.67, 0, 0}, k) == doctest::Approx(1.0));
    CHECK(rate_for_displacement({1.34, 0, 0}, k) == doctest::Approx(1.0 / 64.0));

    k.angular_mode = AngularMode::dipolar;
    const double magic = std::acos(1.0 / std::sqrt(3.0));
    CHECK(rate_for_displacement({std::sin(magic), 0, std::cos(magic)}, k) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rate_for_displacement({0, 0, 1}, k) == doctest::Approx(k.prefactor));

    k.angular_mode = AngularMode::isotropic;
    k.cutoff_radius_nm = 1.0;
    CHECK(rate_for_displacement({1.5, 0, 0}, k) == 0.0);
    CHECK_THROWS_AS(rate_for_displacement({0, 0, 0}, k), Error);
}

TEST_CASE("isotropic rates are invariant under rotation of the lattice") {
    const auto sites = build_lattice(fcc_spec(2));
    CouplingKernel k;
    const double th = 0.7;
    auto rot = [&](const Vec3& v) {
        return Vec3{std::cos(th) * v[0] - std::sin(th) * v[1], std::sin(th) * v[0] + std::cos(th) * v[1], v[2]};
    };
    for (std::size_t j = 1; j < sites.size(); ++j) {
        const auto d = sites.displacement(0, j);
        CHECK(rate_for_displacement(rot(d), k) == doctest::Approx(pairwise_rate(sites, 0, j, k)).epsilon(1e-12));
    }
}

TEST_CASE("neighbour table agrees with brute-force pairs") {
    const auto sites = dilute_sites(build_lattice(fcc_spec(3, 1.0, Boundary::periodic)), 0.7, 3);
    CouplingKernel k;
    k.cutoff_radius_nm = 1.01;
    const auto table = build_neighbor_table(sites, k);
    for (std::size_t i = 0; i < sites.size(); ++i) {
        double brute = 0.0;
        if (sites.occupied(i))
            for (std::size_t j = 0; j < sites.size(); ++j)
                if (j != i && sites.occupied(j)) brute += pairwise_rate(sites, i, j, k);
        CHECK(table.row_sum(i) == doctest::Approx(brute).epsilon(1e-12));
    }
}

TEST_CASE("dilution is deterministic and binomially bounded") {
    LatticeSpec s;
    s.kind = LatticeKind::chain;
    s.linear_size = 10000;
    const auto full = build_lattice(s);
    const auto a = dilute_sites(full, 0.3, 11);
    const auto b = dilute_sites(full, 0.3, 11);
    CHECK(std::equal(a.occupied_mask().begin(), a.occupied_mask().end(), b.occupied_mask().begin()));
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto n = dilute_sites(full, 0.3, seed).occupied_count();
        CHECK(n >= 2817);
        CHECK(n <= 3183);
    }
    CHECK(dilute_sites(full, 0.0, 1).degenerate());
    CHECK(dilute_sites(full, 1.0, 1).occupied_count() == 10000);
    CHECK_THROWS_AS(dilute_sites(full, 1.5, 1), ValidationError);
}

TEST_CASE("invalid specs are rejected") {
    LatticeSpec s;
    s.linear_size = 0;
    CHECK_THROWS_AS(build_lattice(s), ValidationError);
    s.linear_size = 2;
    s.occupancy = -0.1;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    CHECK_THROWS_AS(parse_lattice_kind("hex"), ValidationError);
    CouplingKernel k;
    k.field_axis = {1, 1, 0};
    CHECK_THROWS_AS(k.validate(), ValidationError);
}

TEST_CASE("site csv has one row per site") {
    LatticeSpec s;
    s.kind = LatticeKind::simple_cubic;
    s.linear_size = 2;
    std::ostringstream out;
    build_lattice(s).write_csv(out);
    const auto text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 9);
    CHECK(text.rfind("site_id,x_nm,y_nm,z_nm,occupied\n", 0) == 0);
}

}
