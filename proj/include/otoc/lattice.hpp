#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace otoc::lattice {

using Vec3 = std::array<double, 3>;

enum class LatticeKind { fcc, simple_cubic, chain };
enum class Boundary { open, periodic };
enum class AngularMode { isotropic, dipolar };

LatticeKind parse_lattice_kind(const std::string& name);
std::string to_string(LatticeKind kind);
Boundary parse_boundary(const std::string& name);
std::string to_string(Boundary b);
AngularMode parse_angular_mode(const std::string& name);
std::string to_string(AngularMode m);

struct LatticeSpec {
    LatticeKind kind = LatticeKind::chain;
    int linear_size = 1;           // cells per edge
    int spins_per_site = 1;        // M
    double lattice_constant_nm = 1.0;  // conventional cell edge for fcc
    double occupancy = 1.0;        // p
    Boundary boundary = Boundary::open;

    int dimension() const { return kind == LatticeKind::chain ? 1 : 3; }
    int basis_size() const { return kind == LatticeKind::fcc ? 4 : 1; }
    std::size_t site_count() const;
    double nearest_neighbor_nm() const;
    void validate() const;
};

// Power-law rate kernel. Rates follow the stochastic-model convention
// rate = coupling^2, so an interaction decaying as 1/r^alpha yields
// prefactor / r^(2 alpha).
struct CouplingKernel {
    double alpha = 3.0;
    double prefactor = 1.0;  // rate at r = 1 nm
    AngularMode angular_mode = AngularMode::isotropic;
    Vec3 field_axis{0.0, 0.0, 1.0};
    std::optional<double> cutoff_radius_nm;

    void validate() const;
    // Prefactor for which two sites at `distance_nm` interact at rate 1.
    static double unit_rate_prefactor(double alpha, double distance_nm);
};

class SiteSet {
public:
    SiteSet() = default;
    SiteSet(LatticeSpec spec, std::vector<Vec3> positions);

    const LatticeSpec& spec() const { return spec_; }
    std::size_t size() const { return positions_.size(); }
    std::span<const Vec3> positions() const { return positions_; }
    const Vec3& position(std::size_t i) const { return positions_[i]; }
    int molecule_index(std::size_t i) const { return molecule_index_[i]; }
    bool occupied(std::size_t i) const { return occupied_[i] != 0; }
    std::span<const std::uint8_t> occupied_mask() const { return occupied_; }
    std::size_t occupied_count() const;
    // True when dilution removed every molecule; nothing can be seeded.
    bool degenerate() const { return occupied_count() == 0; }

    int spins_per_site() const { return spec_.spins_per_site; }
    std::size_t total_spins() const { return size() * static_cast<std::size_t>(spins_per_site()); }
    // Periodic box edge per axis (zero for axes the lattice does not span).
    const Vec3& box() const { return box_; }

    // r_j - r_i, minimum image under periodic boundaries.
    Vec3 displacement(std::size_t i, std::size_t j) const;
    double distance(std::size_t i, std::size_t j) const;

    // Occupied site closest to the geometric centre.
    std::size_t central_occupied_site() const;

    SiteSet with_mask(std::vector<std::uint8_t> mask) const;

    void write_csv(std::ostream& out) const;

private:
    LatticeSpec spec_;
    std::vector<Vec3> positions_;
    std::vector<int> molecule_index_;
    std::vector<std::uint8_t> occupied_;
    Vec3 box_{0.0, 0.0, 0.0};
};

SiteSet build_lattice(const LatticeSpec& spec);

// Rate between two sites. Throws when the sites coincide.
double pairwise_rate(const SiteSet& sites, std::size_t i, std::size_t j, const CouplingKernel& kernel);

// Same kernel evaluated on a raw displacement vector.
double rate_for_displacement(const Vec3& d, const CouplingKernel& kernel);

// Keeps each molecule independently with probability p. The decision for
// site i depends only on (seed, i).
SiteSet dilute_sites(const SiteSet& sites, double p, std::uint64_t rng_seed);

// Sparse symmetric rate table over occupied sites within the kernel
// cutoff (all occupied pairs when the kernel has no cutoff).
struct NeighborTable {
    struct Entry {
        std::uint32_t site;
        double rate;
    };
    std::vector<std::size_t> offsets;  // CSR row pointers, size sites+1
    std::vector<Entry> entries;

    std::span<const Entry> row(std::size_t site) const {
        return {entries.data() + offsets[site], entries.data() + offsets[site + 1]};
    }
    double row_sum(std::size_t site) const;
};

NeighborTable build_neighbor_table(const SiteSet& sites, const CouplingKernel& kernel);

}  // namespace otoc::lattice
