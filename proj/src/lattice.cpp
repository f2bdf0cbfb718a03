#include "otoc/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "otoc/error.hpp"
#include "otoc/rng.hpp"

namespace otoc::lattice {

namespace {

constexpr const char* kModule = "lattice-geometry";

[[noreturn]] void invalid(const std::string& what) { throw ValidationError(kModule, what); }

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

}  // namespace

LatticeKind parse_lattice_kind(const std::string& name) {
    if (name == "fcc") return LatticeKind::fcc;
    if (name == "simple-cubic" || name == "sc") return LatticeKind::simple_cubic;
    if (name == "chain") return LatticeKind::chain;
    invalid("unknown lattice kind '" + name + "'");
}

std::string to_string(LatticeKind kind) {
    switch (kind) {
        case LatticeKind::fcc: return "fcc";
        case LatticeKind::simple_cubic: return "simple-cubic";
        case LatticeKind::chain: return "chain";
    }
    return "?";
}

Boundary parse_boundary(const std::string& name) {
    if (name == "open") return Boundary::open;
    if (name == "periodic") return Boundary::periodic;
    invalid("unknown boundary '" + name + "'");
}

std::string to_string(Boundary b) { return b == Boundary::open ? "open" : "periodic"; }

AngularMode parse_angular_mode(const std::string& name) {
    if (name == "isotropic") return AngularMode::isotropic;
    if (name == "dipolar") return AngularMode::dipolar;
    invalid("unknown angular mode '" + name + "'");
}

std::string to_string(AngularMode m) { return m == AngularMode::isotropic ? "isotropic" : "dipolar"; }

std::size_t LatticeSpec::site_count() const {
    std::size_t cells = 1;
    for (int d = 0; d < dimension(); ++d) cells *= static_cast<std::size_t>(linear_size);
    return cells * static_cast<std::size_t>(basis_size());
}

double LatticeSpec::nearest_neighbor_nm() const {
    return kind == LatticeKind::fcc ? lattice_constant_nm / std::sqrt(2.0) : lattice_constant_nm;
}

void LatticeSpec::validate() const {
    if (linear_size < 1) invalid("linear_size must be >= 1");
    if (spins_per_site < 1) invalid("spins_per_site must be >= 1");
    if (!(lattice_constant_nm > 0.0)) invalid("lattice_constant_nm must be positive");
    if (!(occupancy >= 0.0 && occupancy <= 1.0)) invalid("occupancy must lie in [0, 1]");
}

void CouplingKernel::validate() const {
    if (!(alpha > 0.0)) invalid("kernel alpha must be positive");
    if (!(prefactor > 0.0)) invalid("kernel prefactor must be positive");
    if (std::abs(norm(field_axis) - 1.0) > 1e-12) invalid("field_axis must be a unit vector");
    if (cutoff_radius_nm && !(*cutoff_radius_nm > 0.0)) invalid("cutoff radius must be positive");
}

double CouplingKernel::unit_rate_prefactor(double alpha, double distance_nm) {
    return std::pow(distance_nm, 2.0 * alpha);
}

SiteSet::SiteSet(LatticeSpec spec, std::vector<Vec3> positions)
    : spec_(spec), positions_(std::move(positions)) {
    molecule_index_.resize(positions_.size());
    for (std::size_t i = 0; i < positions_.size(); ++i) molecule_index_[i] = static_cast<int>(i);
    occupied_.assign(positions_.size(), 1);
    const double edge = spec_.linear_size * spec_.lattice_constant_nm;
    box_ = {edge, spec_.dimension() == 3 ? edge : 0.0, spec_.dimension() == 3 ? edge : 0.0};
}

std::size_t SiteSet::occupied_count() const {
    return static_cast<std::size_t>(std::count(occupied_.begin(), occupied_.end(), std::uint8_t{1}));
}

Vec3 SiteSet::displacement(std::size_t i, std::size_t j) const {
    Vec3 d{};
    for (int k = 0; k < 3; ++k) {
        d[k] = positions_[j][k] - positions_[i][k];
        if (spec_.boundary == Boundary::periodic && box_[k] > 0.0) d[k] -= box_[k] * std::round(d[k] / box_[k]);
    }
    return d;
}

double SiteSet::distance(std::size_t i, std::size_t j) const { return norm(displacement(i, j)); }

std::size_t SiteSet::central_occupied_site() const {
    Vec3 centre{};
    for (const auto& p : positions_)
        for (int k = 0; k < 3; ++k) centre[k] += p[k];
    for (int k = 0; k < 3; ++k) centre[k] /= static_cast<double>(std::max<std::size_t>(1, positions_.size()));
    std::size_t best = positions_.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        if (!occupied_[i]) continue;
        const Vec3 d{positions_[i][0] - centre[0], positions_[i][1] - centre[1], positions_[i][2] - centre[2]};
        const double r = norm(d);
        if (r < best_d - 1e-12) {
            best_d = r;
            best = i;
        }
    }
    if (best == positions_.size()) throw Error(kModule, "site set has no occupied molecule");
    return best;
}

SiteSet SiteSet::with_mask(std::vector<std::uint8_t> mask) const {
    if (mask.size() != positions_.size()) invalid("mask size does not match site count");
    SiteSet out = *this;
    out.occupied_ = std::move(mask);
    return out;
}

void SiteSet::write_csv(std::ostream& out) const {
    out << "site_id,x_nm,y_nm,z_nm,occupied\n";
    char line[160];
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%d\n", i, positions_[i][0], positions_[i][1],
                      positions_[i][2], occupied_[i] ? 1 : 0);
        out << line;
    }
}

SiteSet build_lattice(const LatticeSpec& spec) {
    spec.validate();
    const double a = spec.lattice_constant_nm;
    const int n = spec.linear_size;
    std::vector<Vec3> pos;
    pos.reserve(spec.site_count());
    switch (spec.kind) {
        case LatticeKind::chain:
            for (int i = 0; i < n; ++i) pos.push_back({i * a, 0.0, 0.0});
            break;
        case LatticeKind::simple_cubic:
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) pos.push_back({i * a, j * a, k * a});
            break;
        case LatticeKind::fcc: {
            static constexpr std::array<Vec3, 4> basis{
                Vec3{0.0, 0.0, 0.0}, Vec3{0.5, 0.5, 0.0}, Vec3{0.5, 0.0, 0.5}, Vec3{0.0, 0.5, 0.5}};
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        for (const auto& b : basis) pos.push_back({(i + b[0]) * a, (j + b[1]) * a, (k + b[2]) * a});
            break;
        }
    }
    return SiteSet(spec, std::move(pos));
}

double rate_for_displacement(const Vec3& d, const CouplingKernel& kernel) {
    const double r = norm(d);
    if (!(r > 0.0)) throw Error(kModule, "pairwise rate requested for coincident sites");
    if (kernel.cutoff_radius_nm && r > *kernel.cutoff_radius_nm * (1.0 + 1e-12)) return 0.0;
    double rate = kernel.prefactor * std::pow(r, -2.0 * kernel.alpha);
    if (kernel.angular_mode == AngularMode::dipolar) {
        const auto& z = kernel.field_axis;
        const double c = (d[0] * z[0] + d[1] * z[1] + d[2] * z[2]) / r;
        const double angular = 0.5 * (3.0 * c * c - 1.0);
        rate *= angular * angular;
    }
    return rate;
}

double pairwise_rate(const SiteSet& sites, std::size_t i, std::size_t j, const CouplingKernel& kernel) {
    if (i == j) throw Error(kModule, "pairwise rate requested for a site with itself");
    return rate_for_displacement(sites.displacement(i, j), kernel);
}

SiteSet dilute_sites(const SiteSet& sites, double p, std::uint64_t rng_seed) {
    if (!(p >= 0.0 && p <= 1.0)) invalid("dilution probability must lie in [0, 1]");
    std::vector<std::uint8_t> mask(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i)
        mask[i] = sites.occupied(i) && hash_to_unit(derive_seed(rng_seed, i)) < p ? 1 : 0;
    return sites.with_mask(std::move(mask));
}

double NeighborTable::row_sum(std::size_t site) const {
    double s = 0.0;
    for (const auto& e : row(site)) s += e.rate;
    return s;
}

NeighborTable build_neighbor_table(const SiteSet& sites, const CouplingKernel& kernel) {
    kernel.validate();
    const std::size_t n = sites.size();
    std::vector<std::vector<NeighborTable::Entry>> rows(n);

    auto consider = [&](std::size_t i, std::size_t j) {
        const double rate = pairwise_rate(sites, i, j, kernel);
        if (rate > 0.0) rows[i].push_back({static_cast<std::uint32_t>(j), rate});
    };

    if (!kernel.cutoff_radius_nm) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!sites.occupied(i)) continue;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i && sites.occupied(j)) consider(i, j);
        }
    } else {
        // Cell list with cell edge >= cutoff; only adjacent cells are scanned.
        const double cutoff = *kernel.cutoff_radius_nm;
        const bool periodic = sites.spec().boundary == Boundary::periodic;
        Vec3 lo{}, extent{};
        std::array<int, 3> ncell{1, 1, 1};
        std::array<bool, 3> wrap{false, false, false};
        for (int k = 0; k < 3; ++k) {
            double mn = std::numeric_limits<double>::infinity(), mx = -mn;
            for (const auto& p : sites.positions()) {
                mn = std::min(mn, p[k]);
                mx = std::max(mx, p[k]);
            }
            lo[k] = mn;
            if (periodic && sites.box()[k] > 0.0) {
                extent[k] = sites.box()[k];
                const int c = static_cast<int>(std::floor(extent[k] / cutoff));
                if (c >= 3) {
                    ncell[k] = c;
                    wrap[k] = true;
                }
            } else {
                extent[k] = mx - mn;
                ncell[k] = std::max(1, static_cast<int>(std::floor(extent[k] / cutoff)));
            }
        }
        auto cell_coord = [&](const Vec3& p, int k) {
            if (ncell[k] == 1) return 0;
            const double f = (p[k] - lo[k]) / extent[k];
            return std::clamp(static_cast<int>(f * ncell[k]), 0, ncell[k] - 1);
        };
        const std::size_t total_cells = static_cast<std::size_t>(ncell[0]) * ncell[1] * ncell[2];
        std::vector<std::vector<std::uint32_t>> cells(total_cells);
        std::vector<std::array<int, 3>> coord(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!sites.occupied(i)) continue;
            const auto& p = sites.position(i);
            coord[i] = {cell_coord(p, 0), cell_coord(p, 1), cell_coord(p, 2)};
            cells[(static_cast<std::size_t>(coord[i][0]) * ncell[1] + coord[i][1]) * ncell[2] + coord[i][2]].push_back(
                static_cast<std::uint32_t>(i));
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!sites.occupied(i)) continue;
            for (int dx = -1; dx <= 1; ++dx)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dz = -1; dz <= 1; ++dz) {
                        std::array<int, 3> c{coord[i][0] + dx, coord[i][1] + dy, coord[i][2] + dz};
                        const std::array<int, 3> delta{dx, dy, dz};
                        bool skip = false;
                        for (int k = 0; k < 3; ++k) {
                            if (ncell[k] == 1) {
                                if (delta[k] != 0) skip = true;
                                c[k] = 0;
                            } else if (wrap[k]) {
                                c[k] = (c[k] + ncell[k]) % ncell[k];
                            } else if (c[k] < 0 || c[k] >= ncell[k]) {
                                skip = true;
                            }
                        }
                        if (skip) continue;
                        for (auto j : cells[(static_cast<std::size_t>(c[0]) * ncell[1] + c[1]) * ncell[2] + c[2]])
                            if (j != i) consider(i, j);
                    }
        }
    }

    NeighborTable table;
    table.offsets.resize(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::sort(rows[i].begin(), rows[i].end(), [](const auto& a, const auto& b) { return a.site < b.site; });
        table.offsets[i + 1] = table.offsets[i] + rows[i].size();
    }
    table.entries.reserve(table.offsets[n]);
    for (auto& r : rows) table.entries.insert(table.entries.end(), r.begin(), r.end());
    return table;
}

}  // namespace otoc::lattice
