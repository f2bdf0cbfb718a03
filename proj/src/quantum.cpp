#include "otoc/quantum.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "otoc/error.hpp"
#include "otoc/parallel.hpp"
#include "otoc/rng.hpp"

namespace otoc::quantum {

namespace {

constexpr const char* kModule = "quantum-oracle";
constexpr cplx kI{0.0, 1.0};

[[noreturn]] void invalid(const std::string& what) { throw ValidationError(kModule, what); }

std::size_t dim_of(int n_spins) { return std::size_t{1} << n_spins; }

// Z eigenvalue sum for basis index s: (#up) - (#down).
inline double z_total(std::uint64_t s, int n_spins) { return n_spins - 2.0 * std::popcount(s); }

cplx dot(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
    return acc;
}

double norm2(const std::vector<cplx>& a) {
    double acc = 0.0;
    for (const cplx& x : a) acc += std::norm(x);
    return acc;
}

// Per-site rotation cos(th) + i s sin(th) P with P = X.
void rotate_x_all(std::vector<cplx>& psi, int n_spins, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    for (int k = 0; k < n_spins; ++k) {
        const std::size_t bit = std::size_t{1} << k;
        for (std::size_t i = 0; i < psi.size(); ++i) {
            if (i & bit) continue;
            const cplx a0 = psi[i], a1 = psi[i | bit];
            psi[i] = c * a0 + kI * s * a1;
            psi[i | bit] = kI * s * a0 + c * a1;
        }
    }
}

void apply_total(std::vector<cplx>& psi, int n_spins, Axis axis) {
    if (axis == Axis::Z) {
        for (std::size_t s = 0; s < psi.size(); ++s) psi[s] *= z_total(s, n_spins);
        return;
    }
    std::vector<cplx> out(psi.size(), cplx{0.0, 0.0});
    for (int k = 0; k < n_spins; ++k) {
        std::vector<cplx> tmp = psi;
        apply_pauli(tmp, k, axis);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tmp[i];
    }
    psi.swap(out);
}

class FloquetEvolution final : public Evolution {
public:
    explicit FloquetEvolution(const FloquetSpec& spec) : spec_(spec) {
        spec.validate();
        const int L = spec.n_spins;
        const auto h = spec.fields();
        phases_.resize(dim_of(L));
        for (std::size_t s = 0; s < phases_.size(); ++s) {
            double e = 0.0;
            for (int r = 0; r < L; ++r) {
                const double zr = (s >> r) & 1 ? -1.0 : 1.0;
                e += h[r] * zr;
                for (int r2 = r + 1; r2 < L; ++r2) {
                    const double w = coupling(r2 - r);
                    if (w == 0.0) continue;
                    const double z2 = (s >> r2) & 1 ? -1.0 : 1.0;
                    e += spec.J * w * zr * z2;
                }
            }
            phases_[s] = std::polar(1.0, e);
        }
    }

    int n_spins() const override { return spec_.n_spins; }
    bool discrete() const override { return true; }

    void forward(std::vector<cplx>& psi, double t) const override {
        const long long periods = period_count(t);
        for (long long p = 0; p < periods; ++p) {
            rotate_x_all(psi, spec_.n_spins, spec_.b);
            for (std::size_t s = 0; s < psi.size(); ++s) psi[s] *= phases_[s];
        }
    }

    void backward(std::vector<cplx>& psi, double t) const override {
        const long long periods = period_count(t);
        for (long long p = 0; p < periods; ++p) {
            for (std::size_t s = 0; s < psi.size(); ++s) psi[s] *= std::conj(phases_[s]);
            rotate_x_all(psi, spec_.n_spins, -spec_.b);
        }
    }

private:
    double coupling(int d) const {
        if (std::isinf(spec_.alpha)) return d == 1 ? 1.0 : 0.0;
        return std::pow(static_cast<double>(d), -spec_.alpha);
    }

    static long long period_count(double t) {
        const long long p = std::llround(t);
        if (t < 0 || std::abs(t - static_cast<double>(p)) > 1e-9) invalid("Floquet time must be a nonnegative integer");
        return p;
    }

    FloquetSpec spec_;
    std::vector<cplx> phases_;
};

class ChebyshevEvolution final : public Evolution {
public:
    explicit ChebyshevEvolution(const HamiltonianSpec& spec) : H_(spec.n_spins, hamiltonian_terms(spec)) {}

    int n_spins() const override { return H_.n_spins(); }
    bool discrete() const override { return false; }
    void forward(std::vector<cplx>& psi, double t) const override { propagate(psi, t); }
    void backward(std::vector<cplx>& psi, double t) const override { propagate(psi, -t); }

private:
    // psi <- exp(-i H t) psi
    void propagate(std::vector<cplx>& psi, double t) const {
        if (t == 0.0) return;
        const double a = H_.spectral_bound() * 1.01 + 1e-12;
        const int chunks = std::max(1, static_cast<int>(std::ceil(a * std::abs(t) / 40.0)));
        const double dt = t / chunks;
        for (int c = 0; c < chunks; ++c) step(psi, dt, a);
    }

    void step(std::vector<cplx>& psi, double t, double a) const {
        const double x = a * std::abs(t);
        // (-i sgn t)^k
        const cplx unit = t > 0 ? cplx{0.0, -1.0} : cplx{0.0, 1.0};
        const std::size_t n = psi.size();
        std::vector<cplx> prev = psi, cur(n), next(n), out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = std::cyl_bessel_j(0.0, x) * prev[i];
        // T_1 = H / a
        H_.apply(prev, cur);
        for (auto& v : cur) v /= a;
        cplx phase = unit;
        const int k_max = static_cast<int>(x + 10.0 * std::cbrt(x) + 30.0);
        for (int k = 1; k <= k_max; ++k) {
            const double jk = std::cyl_bessel_j(static_cast<double>(k), x);
            const cplx coef = 2.0 * phase * jk;
            for (std::size_t i = 0; i < n; ++i) out[i] += coef * cur[i];
            if (k > x && std::abs(jk) < 1e-17) break;
            H_.apply(cur, next);
            for (std::size_t i = 0; i < n; ++i) next[i] = 2.0 * next[i] / a - prev[i];
            prev.swap(cur);
            cur.swap(next);
            phase *= unit;
        }
        psi.swap(out);
    }

    SparseHamiltonian H_;
};

class DenseEvolution final : public Evolution {
public:
    explicit DenseEvolution(const HamiltonianSpec& spec) : n_spins_(spec.n_spins) {
        if (spec.n_spins > 12) invalid("dense backend limited to 12 spins");
        const std::size_t d = dim_of(spec.n_spins);
        const auto h = dense_hamiltonian(spec.n_spins, hamiltonian_terms(spec));
        Eigen::MatrixXcd H(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) H(i, j) = h[i * d + j];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
        if (es.info() != Eigen::Success) throw Error(kModule, "eigendecomposition failed");
        V_ = es.eigenvectors();
        E_ = es.eigenvalues();
    }

    int n_spins() const override { return n_spins_; }
    bool discrete() const override { return false; }
    void forward(std::vector<cplx>& psi, double t) const override { propagate(psi, t); }
    void backward(std::vector<cplx>& psi, double t) const override { propagate(psi, -t); }

private:
    void propagate(std::vector<cplx>& psi, double t) const {
        Eigen::Map<Eigen::VectorXcd> v(psi.data(), static_cast<Eigen::Index>(psi.size()));
        Eigen::VectorXcd c = V_.adjoint() * v;
        for (Eigen::Index i = 0; i < c.size(); ++i) c[i] *= std::polar(1.0, -E_[i] * t);
        v = V_ * c;
    }

    int n_spins_;
    Eigen::MatrixXcd V_;
    Eigen::VectorXd E_;
};

struct StateSet {
    std::size_t count;
    Estimator estimator;
    std::uint64_t seed;
    int n_spins;

    StateVector state(std::size_t i) const {
        if (estimator == Estimator::exact_trace) return StateVector::basis(n_spins, i);
        return StateVector::random(n_spins, derive_seed(seed, i));
    }
};

StateSet states_for(const Evolution& ev, const OtocOptions& opt) {
    const int L = ev.n_spins();
    if (opt.estimator == Estimator::exact_trace) {
        if (L > 14) invalid("exact trace limited to 14 spins; use random states");
        return {dim_of(L), opt.estimator, opt.seed, L};
    }
    if (opt.n_states < 1) invalid("need at least one random state");
    return {static_cast<std::size_t>(opt.n_states), opt.estimator, opt.seed, L};
}

Estimate summarize(const std::vector<double>& v, Estimator est) {
    Estimate e;
    const double n = static_cast<double>(v.size());
    for (double x : v) e.value += x;
    e.value /= n;
    if (est == Estimator::random_states && v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - e.value) * (x - e.value);
        e.error = std::sqrt(ss / (n - 1.0) / n);
    }
    return e;
}

// P_a(t) psi
std::vector<cplx> heisenberg(const Evolution& ev, const std::vector<cplx>& evolved, int a, Axis axis, double t) {
    std::vector<cplx> w = evolved;
    apply_pauli(w, a, axis);
    ev.backward(w, t);
    return w;
}

// [P_a(t), P_b] psi, or U^dagger [P_a, P_b] U psi for the all-at-t placement.
// `evolved` is U psi; `wa` is P_a(t) psi (second-at-zero only).
std::vector<cplx> commutator_vector(const Evolution& ev, const std::vector<cplx>& psi, const std::vector<cplx>& evolved,
                                    const std::vector<cplx>& wa, int a, int b, Axis axis, TimePlacement placement,
                                    double t, const std::vector<cplx>* chi_b = nullptr) {
    if (placement == TimePlacement::all_at_t) {
        std::vector<cplx> ab = evolved, ba = evolved;
        apply_pauli(ab, b, axis);
        apply_pauli(ab, a, axis);
        apply_pauli(ba, a, axis);
        apply_pauli(ba, b, axis);
        for (std::size_t i = 0; i < ab.size(); ++i) ab[i] -= ba[i];
        ev.backward(ab, t);
        return ab;
    }
    std::vector<cplx> u;
    if (chi_b) {
        u = *chi_b;
    } else {
        u = psi;
        apply_pauli(u, b, axis);
        ev.forward(u, t);
    }
    apply_pauli(u, a, axis);
    ev.backward(u, t);
    std::vector<cplx> pb_wa = wa;
    apply_pauli(pb_wa, b, axis);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= pb_wa[i];
    return u;
}

}  // namespace

StateVector StateVector::all_up(int n_spins) { return basis(n_spins, 0); }

StateVector StateVector::basis(int n_spins, std::uint64_t index) {
    if (n_spins < 1 || n_spins > kMaxSpins) invalid("n_spins must lie in [1, 24]");
    StateVector s;
    s.n_spins = n_spins;
    s.amplitudes.assign(dim_of(n_spins), cplx{0.0, 0.0});
    if (index >= s.amplitudes.size()) invalid("basis index out of range");
    s.amplitudes[index] = 1.0;
    return s;
}

StateVector StateVector::random(int n_spins, std::uint64_t seed) {
    StateVector s = basis(n_spins, 0);
    double nrm = 0.0;
    for (std::size_t i = 0; i < s.amplitudes.size(); ++i) {
        s.amplitudes[i] = cplx{counter_normal(seed, 2 * i), counter_normal(seed, 2 * i + 1)};
        nrm += std::norm(s.amplitudes[i]);
    }
    nrm = std::sqrt(nrm);
    for (auto& a : s.amplitudes) a /= nrm;
    return s;
}

double StateVector::norm() const { return std::sqrt(norm2(amplitudes)); }

Axis parse_axis(const std::string& name) {
    if (name == "X" || name == "x") return Axis::X;
    if (name == "Y" || name == "y") return Axis::Y;
    if (name == "Z" || name == "z") return Axis::Z;
    invalid("unknown axis '" + name + "'");
}

char to_char(Axis a) { return a == Axis::X ? 'X' : a == Axis::Y ? 'Y' : 'Z'; }

OperatorSpec OperatorSpec::pauli(int site, Axis axis) { return {Kind::pauli_string, {site}, {axis}}; }
OperatorSpec OperatorSpec::total(Axis axis) { return {Kind::total_spin_axis, {}, {axis}}; }

void OperatorSpec::validate(int n_spins) const {
    if (axes.empty()) invalid("operator needs an axis");
    if (kind == Kind::total_spin_axis) return;
    if (sites.empty()) invalid("Pauli string must have length >= 1");
    if (sites.size() != axes.size()) invalid("one axis per site required");
    std::vector<int> sorted = sites;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) invalid("Pauli string sites must be distinct");
    for (int s : sites)
        if (s < 0 || s >= n_spins) invalid("Pauli string site out of range");
}

void apply_pauli(std::vector<cplx>& psi, int site, Axis axis) {
    const std::size_t bit = std::size_t{1} << site;
    for (std::size_t i = 0; i < psi.size(); ++i) {
        if (i & bit) continue;
        const cplx a0 = psi[i], a1 = psi[i | bit];
        switch (axis) {
            case Axis::X:
                psi[i] = a1;
                psi[i | bit] = a0;
                break;
            case Axis::Y:
                psi[i] = -kI * a1;
                psi[i | bit] = kI * a0;
                break;
            case Axis::Z:
                psi[i | bit] = -a1;
                break;
        }
    }
}

std::vector<cplx> apply(const OperatorSpec& op, const std::vector<cplx>& psi, int n_spins) {
    op.validate(n_spins);
    std::vector<cplx> out = psi;
    if (op.kind == OperatorSpec::Kind::total_spin_axis) {
        apply_total(out, n_spins, op.axes[0]);
        return out;
    }
    for (std::size_t k = 0; k < op.sites.size(); ++k) apply_pauli(out, op.sites[k], op.axes[k]);
    return out;
}

void FloquetSpec::validate() const {
    if (n_spins < 1 || n_spins > kMaxSpins) invalid("n_spins must lie in [1, 24]");
    if (!(alpha > 0)) invalid("alpha must be positive");
    if (!(h_std >= 0)) invalid("h_std must be >= 0");
}

std::vector<double> FloquetSpec::fields() const {
    std::vector<double> h(static_cast<std::size_t>(n_spins));
    for (int r = 0; r < n_spins; ++r) h[r] = h_std * counter_normal(disorder_seed, static_cast<std::uint64_t>(r));
    return h;
}

Model parse_model(const std::string& name) {
    if (name == "H_DQ" || name == "dq") return Model::H_DQ;
    if (name == "H_YY" || name == "yy") return Model::H_YY;
    if (name == "secular") return Model::secular;
    if (name == "generic-random" || name == "generic") return Model::generic_random;
    if (name == "xx") return Model::xx;
    invalid("unknown model '" + name + "'");
}

std::string to_string(Model m) {
    switch (m) {
        case Model::H_DQ: return "H_DQ";
        case Model::H_YY: return "H_YY";
        case Model::secular: return "secular";
        case Model::generic_random: return "generic-random";
        case Model::xx: return "xx";
    }
    return "?";
}

Backend parse_backend(const std::string& name) {
    if (name == "auto" || name == "automatic") return Backend::automatic;
    if (name == "dense") return Backend::dense;
    if (name == "chebyshev" || name == "krylov") return Backend::chebyshev;
    invalid("unknown backend '" + name + "'");
}

void HamiltonianSpec::validate() const {
    if (n_spins < 2 || n_spins > kMaxSpins) invalid("n_spins must lie in [2, 24]");
    if (couplings.size() != static_cast<std::size_t>(n_spins)) invalid("couplings must be n_spins x n_spins");
    for (std::size_t a = 0; a < couplings.size(); ++a) {
        if (couplings[a].size() != couplings.size()) invalid("couplings must be square");
        for (std::size_t b = 0; b < a; ++b)
            if (std::abs(couplings[a][b] - couplings[b][a]) > 1e-12 * (1 + std::abs(couplings[a][b])))
                invalid("couplings must be symmetric");
    }
}

std::vector<std::vector<double>> couplings_from_sites(const lattice::SiteSet& sites, double alpha,
                                                      lattice::AngularMode mode, const lattice::Vec3& axis,
                                                      double scale) {
    if (sites.spins_per_site() != 1) invalid("oracle couplings need one spin per site");
    const std::size_t n = sites.size();
    std::vector<std::vector<double>> D(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const auto d = sites.displacement(a, b);
            const double r = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            if (!(r > 0)) invalid("coincident sites");
            double f = 1.0;
            if (mode == lattice::AngularMode::dipolar) {
                const double c = (d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2]) / r;
                f = (3 * c * c - 1) / 2;
            }
            D[a][b] = D[b][a] = scale * f * std::pow(r, -alpha);
        }
    }
    return D;
}

std::vector<std::vector<double>> chain_couplings(int n_spins, double alpha) {
    std::vector<std::vector<double>> D(n_spins, std::vector<double>(n_spins, 0.0));
    for (int a = 0; a < n_spins; ++a)
        for (int b = 0; b < n_spins; ++b)
            if (a != b) D[a][b] = std::isinf(alpha) ? (std::abs(a - b) == 1 ? 1.0 : 0.0) : std::pow(std::abs(a - b), -alpha);
    return D;
}

std::vector<PauliTerm> hamiltonian_terms(const HamiltonianSpec& spec) {
    spec.validate();
    const int L = spec.n_spins;
    std::vector<PauliTerm> terms;
    auto pair_term = [&](double c, int a, Axis pa, int b, Axis pb) {
        if (c == 0.0) return;
        std::uint32_t x = 0, z = 0;
        auto add = [&](int site, Axis p) {
            const std::uint32_t bit = 1u << site;
            if (p == Axis::X || p == Axis::Y) x |= bit;
            if (p == Axis::Z || p == Axis::Y) z |= bit;
        };
        add(a, pa);
        add(b, pb);
        terms.push_back({c, x, z});
    };
    std::uint64_t counter = 0;
    for (int a = 0; a < L; ++a) {
        for (int b = a + 1; b < L; ++b) {
            // sums over ordered pairs a != b count each bond twice
            const double D = 2.0 * spec.couplings[a][b];
            switch (spec.model) {
                case Model::H_DQ:
                    pair_term(D, a, Axis::X, b, Axis::X);
                    pair_term(-D, a, Axis::Y, b, Axis::Y);
                    break;
                case Model::H_YY:
                    pair_term(D, a, Axis::Y, b, Axis::Y);
                    pair_term(-D, a, Axis::X, b, Axis::X);
                    pair_term(-D, a, Axis::Z, b, Axis::Z);
                    break;
                case Model::secular:
                    pair_term(D, a, Axis::Z, b, Axis::Z);
                    pair_term(-D, a, Axis::X, b, Axis::X);
                    pair_term(-D, a, Axis::Y, b, Axis::Y);
                    break;
                case Model::xx:
                    pair_term(D, a, Axis::X, b, Axis::X);
                    break;
                case Model::generic_random: {
                    // D' = D sqrt(3/16); sigma^0 is the identity
                    const double Dp = spec.couplings[a][b] * std::sqrt(3.0 / 16.0);
                    for (int mu = 0; mu < 4; ++mu) {
                        for (int nu = 0; nu < 4; ++nu) {
                            const double B = counter_normal(spec.seed, counter++);
                            if (Dp == 0.0) continue;
                            std::uint32_t x = 0, z = 0;
                            auto add = [&](int site, int p) {
                                const std::uint32_t bit = 1u << site;
                                if (p == 1 || p == 2) x |= bit;
                                if (p == 3 || p == 2) z |= bit;
                            };
                            add(a, mu);
                            add(b, nu);
                            terms.push_back({Dp * B, x, z});
                        }
                    }
                    break;
                }
            }
        }
    }
    return terms;
}

SparseHamiltonian::SparseHamiltonian(int n_spins, const std::vector<PauliTerm>& terms) : n_spins_(n_spins) {
    if (n_spins < 1 || n_spins > kMaxSpins) invalid("n_spins must lie in [1, 24]");
    const std::size_t d = dim_of(n_spins);
    std::map<std::uint32_t, std::size_t> slot;
    for (const auto& term : terms) {
        auto [it, fresh] = slot.try_emplace(term.x_mask, x_masks_.size());
        if (fresh) {
            x_masks_.push_back(term.x_mask);
            phases_.emplace_back(d, cplx{0.0, 0.0});
        }
        auto& f = phases_[it->second];
        static const cplx ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        const cplx c = term.coef * ipow[std::popcount(term.x_mask & term.z_mask) % 4];
        for (std::size_t s = 0; s < d; ++s) f[s] += (std::popcount(s & term.z_mask) & 1) ? -c : c;
    }
    std::vector<double> col(d, 0.0);
    for (const auto& f : phases_)
        for (std::size_t s = 0; s < d; ++s) col[s] += std::abs(f[s]);
    for (double c : col) bound_ = std::max(bound_, c);
}

void SparseHamiltonian::apply(const std::vector<cplx>& in, std::vector<cplx>& out) const {
    out.assign(in.size(), cplx{0.0, 0.0});
    for (std::size_t g = 0; g < x_masks_.size(); ++g) {
        const std::size_t x = x_masks_[g];
        const auto& f = phases_[g];
        for (std::size_t s = 0; s < in.size(); ++s) out[s ^ x] += f[s] * in[s];
    }
}

std::vector<cplx> dense_hamiltonian(int n_spins, const std::vector<PauliTerm>& terms) {
    if (n_spins > 12) invalid("dense Hamiltonian limited to 12 spins");
    const SparseHamiltonian H(n_spins, terms);
    const std::size_t d = dim_of(n_spins);
    std::vector<cplx> m(d * d), e(d), col;
    for (std::size_t j = 0; j < d; ++j) {
        std::fill(e.begin(), e.end(), cplx{0.0, 0.0});
        e[j] = 1.0;
        H.apply(e, col);
        for (std::size_t i = 0; i < d; ++i) m[i * d + j] = col[i];
    }
    return m;
}

std::unique_ptr<Evolution> make_evolution(const FloquetSpec& spec) { return std::make_unique<FloquetEvolution>(spec); }

std::unique_ptr<Evolution> make_evolution(const HamiltonianSpec& spec) {
    spec.validate();
    if (spec.backend == Backend::dense) return std::make_unique<DenseEvolution>(spec);
    return std::make_unique<ChebyshevEvolution>(spec);
}

StateVector evolve(const StateVector& state, const FloquetSpec& spec, int periods) {
    if (periods < 0) invalid("periods must be >= 0");
    if (state.n_spins != spec.n_spins) invalid("state size does not match spec");
    const auto ev = make_evolution(spec);
    StateVector out = state;
    ev->forward(out.amplitudes, periods);
    return out;
}

StateVector evolve(const StateVector& state, const HamiltonianSpec& spec, double t) {
    if (t < 0) invalid("t must be >= 0");
    if (state.n_spins != spec.n_spins) invalid("state size does not match spec");
    const auto ev = make_evolution(spec);
    StateVector out = state;
    ev->forward(out.amplitudes, t);
    return out;
}

Estimate local_otoc(const Evolution& ev, int a, int b, double t, const OtocOptions& opt) {
    const int L = ev.n_spins();
    if (a < 0 || a >= L || b < 0 || b >= L) invalid("spin index out of range");
    const StateSet set = states_for(ev, opt);
    std::vector<double> vals(set.count);
    parallel_for(set.count, opt.threads, [&](std::size_t i) {
        const auto psi = set.state(i).amplitudes;
        auto evolved = psi;
        ev.forward(evolved, t);
        std::vector<cplx> wa;
        if (opt.placement == TimePlacement::second_at_zero) wa = heisenberg(ev, evolved, a, opt.axis, t);
        vals[i] = norm2(commutator_vector(ev, psi, evolved, wa, a, b, opt.axis, opt.placement, t));
    });
    return summarize(vals, set.estimator);
}

Estimate global_otoc(const Evolution& ev, double t, const OtocOptions& opt) {
    const int L = ev.n_spins();
    const StateSet set = states_for(ev, opt);
    std::vector<double> vals(set.count);
    parallel_for(set.count, opt.threads, [&](std::size_t i) {
        const auto psi = set.state(i).amplitudes;
        if (opt.placement == TimePlacement::all_at_t) {
            // [P(t), P(t)] = 0
            vals[i] = 0.0;
            return;
        }
        // P(t) P psi
        auto u = psi;
        apply_total(u, L, opt.axis);
        ev.forward(u, t);
        apply_total(u, L, opt.axis);
        ev.backward(u, t);
        // P P(t) psi
        auto w = psi;
        ev.forward(w, t);
        apply_total(w, L, opt.axis);
        ev.backward(w, t);
        apply_total(w, L, opt.axis);
        for (std::size_t k = 0; k < u.size(); ++k) u[k] -= w[k];
        vals[i] = norm2(u);
    });
    return summarize(vals, set.estimator);
}

Estimate offdiag_otoc(const Evolution& ev, int a, int b, int c, int d, double t, const OtocOptions& opt) {
    const int L = ev.n_spins();
    for (int s : {a, b, c, d})
        if (s < 0 || s >= L) invalid("spin index out of range");
    if (a == c && b == d) invalid("off-diagonal OTOC needs (a,b) != (c,d)");
    const StateSet set = states_for(ev, opt);
    std::vector<double> vals(set.count);
    parallel_for(set.count, opt.threads, [&](std::size_t i) {
        const auto psi = set.state(i).amplitudes;
        auto evolved = psi;
        ev.forward(evolved, t);
        std::vector<cplx> wa, wc;
        if (opt.placement == TimePlacement::second_at_zero) {
            wa = heisenberg(ev, evolved, a, opt.axis, t);
            wc = c == a ? wa : heisenberg(ev, evolved, c, opt.axis, t);
        }
        const auto v1 = commutator_vector(ev, psi, evolved, wa, a, b, opt.axis, opt.placement, t);
        const auto v2 = commutator_vector(ev, psi, evolved, wc, c, d, opt.axis, opt.placement, t);
        vals[i] = dot(v1, v2).real();
    });
    return summarize(vals, set.estimator);
}

OtocDecomposition otoc_decomposition(const Evolution& ev, double t, const OtocOptions& opt) {
    const int L = ev.n_spins();
    const std::size_t P = static_cast<std::size_t>(L) * L;
    const StateSet set = states_for(ev, opt);
    // per state: Gram matrix over pairs (ab) and the global value
    std::vector<std::vector<double>> gram(set.count);
    std::vector<double> globals(set.count);
    parallel_for(set.count, opt.threads, [&](std::size_t i) {
        const auto psi = set.state(i).amplitudes;
        auto evolved = psi;
        ev.forward(evolved, t);
        std::vector<std::vector<cplx>> w(L);
        if (opt.placement == TimePlacement::second_at_zero)
            for (int a = 0; a < L; ++a) w[a] = heisenberg(ev, evolved, a, opt.axis, t);
        std::vector<std::vector<cplx>> v(P);
        for (int b = 0; b < L; ++b) {
            std::vector<cplx> chi;
            if (opt.placement == TimePlacement::second_at_zero) {
                chi = psi;
                apply_pauli(chi, b, opt.axis);
                ev.forward(chi, t);
            }
            for (int a = 0; a < L; ++a)
                v[a * L + b] = commutator_vector(ev, psi, evolved, w[a], a, b, opt.axis, opt.placement, t,
                                                 opt.placement == TimePlacement::second_at_zero ? &chi : nullptr);
        }
        std::vector<double> g(P * P);
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t q = p; q < P; ++q) g[p * P + q] = g[q * P + p] = dot(v[p], v[q]).real();
        gram[i] = std::move(g);
        std::vector<cplx> sum(psi.size(), cplx{0.0, 0.0});
        for (const auto& x : v)
            for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += x[k];
        globals[i] = norm2(sum);
    });
    OtocDecomposition out;
    out.n_spins = L;
    std::vector<double> mean(P * P, 0.0);
    for (const auto& g : gram)
        for (std::size_t k = 0; k < g.size(); ++k) mean[k] += g[k];
    for (double& x : mean) x /= static_cast<double>(set.count);
    out.local.resize(P);
    for (std::size_t p = 0; p < P; ++p) {
        out.local[p] = mean[p * P + p];
        out.diagonal_sum += mean[p * P + p];
        for (std::size_t q = 0; q < P; ++q)
            if (q != p) {
                out.offdiag_sum += mean[p * P + q];
                out.max_offdiag_abs = std::max(out.max_offdiag_abs, std::abs(mean[p * P + q]));
            }
    }
    const Estimate g = summarize(globals, set.estimator);
    out.global = g.value;
    out.global_error = g.error;
    return out;
}

std::vector<Estimate> offdiag_profile(const Evolution& ev, int a, int ref, double t, const OtocOptions& opt) {
    const int L = ev.n_spins();
    if (a < 0 || a >= L || ref < 0 || ref >= L) invalid("spin index out of range");
    const StateSet set = states_for(ev, opt);
    std::vector<std::vector<double>> vals(set.count);
    parallel_for(set.count, opt.threads, [&](std::size_t i) {
        const auto psi = set.state(i).amplitudes;
        auto evolved = psi;
        ev.forward(evolved, t);
        std::vector<cplx> wa;
        if (opt.placement == TimePlacement::second_at_zero) wa = heisenberg(ev, evolved, a, opt.axis, t);
        std::vector<std::vector<cplx>> v(L);
        for (int r = 0; r < L; ++r) v[r] = commutator_vector(ev, psi, evolved, wa, a, r, opt.axis, opt.placement, t);
        vals[i].resize(L);
        for (int r = 0; r < L; ++r) vals[i][r] = dot(v[r], v[ref]).real();
    });
    std::vector<Estimate> out(L);
    for (int r = 0; r < L; ++r) {
        std::vector<double> col(set.count);
        for (std::size_t i = 0; i < set.count; ++i) col[i] = vals[i][r];
        out[r] = summarize(col, set.estimator);
    }
    return out;
}

MqcExactResult mqc_exact(const Evolution& ev, double t, int n_max) {
    const int L = ev.n_spins();
    if (L > 12) invalid("exact MQC limited to 12 spins");
    if (n_max < 0) n_max = L;
    if (n_max > L) invalid("n_max must not exceed the number of spins");
    const std::size_t d = dim_of(L);
    // U(t) column by column
    Eigen::MatrixXcd U(d, d);
    std::vector<cplx> col(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::fill(col.begin(), col.end(), cplx{0.0, 0.0});
        col[j] = 1.0;
        ev.forward(col, t);
        for (std::size_t i = 0; i < d; ++i) U(i, j) = col[i];
    }
    Eigen::VectorXd m(d);
    for (std::size_t s = 0; s < d; ++s) m[s] = 0.5 * z_total(s, L);
    const Eigen::MatrixXcd W = U.adjoint() * m.asDiagonal() * U;
    const double tr_iz2 = 0.25 * L * static_cast<double>(d);

    const std::size_t grid = mqc::sweep_size(n_max);
    std::vector<cplx> samples(grid);
    const Eigen::MatrixXcd Wt = W.transpose();
    for (std::size_t k = 0; k < grid; ++k) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(grid);
        Eigen::VectorXcd r(d);
        for (std::size_t s = 0; s < d; ++s) r[s] = std::polar(1.0, phi * m[s]);
        // tr(R W R^dagger W)
        const Eigen::MatrixXcd A = r.asDiagonal() * W * r.conjugate().asDiagonal();
        samples[k] = A.cwiseProduct(Wt).sum() / tr_iz2;
    }
    const auto sweep = mqc::gn_from_phase_sweep(samples);
    MqcExactResult res;
    res.imag_residue = sweep.imag_residue;
    res.spectrum = sweep.spectrum;
    res.spectrum.normalization = mqc::Normalization::unit_sum;
    res.fourier_moment = mqc::second_moment(res.spectrum);

    const Eigen::MatrixXcd C = m.asDiagonal() * W - W * m.asDiagonal();
    res.commutator_moment = -C.cwiseProduct(C.transpose()).sum().real() / tr_iz2;
    return res;
}

double phase_signal(const Evolution& ev, double t, double phi) {
    const int L = ev.n_spins();
    auto psi = StateVector::all_up(L).amplitudes;
    ev.forward(psi, t);
    rotate_x_all(psi, L, phi);
    ev.backward(psi, t);
    double f = 0.0;
    for (std::size_t s = 0; s < psi.size(); ++s) f += z_total(s, L) * std::norm(psi[s]);
    return f;
}

PhaseProtocolResult phase_protocol_pure(const Evolution& ev, double t, const PhaseProtocolOptions& opt) {
    if (!(opt.h > 0) || opt.levels < 1) invalid("phase step and level count must be positive");
    const int L = ev.n_spins();
    const double f0 = phase_signal(ev, t, 0.0);
    std::vector<std::vector<double>> R(opt.levels);
    double h = opt.h;
    for (int i = 0; i < opt.levels; ++i, h /= 2) {
        const double d2 = (phase_signal(ev, t, h) - 2 * f0 + phase_signal(ev, t, -h)) / (h * h);
        R[i].push_back(d2);
        double p = 4.0;
        for (int j = 1; j <= i; ++j, p *= 4.0) R[i].push_back(R[i][j - 1] + (R[i][j - 1] - R[i - 1][j - 1]) / (p - 1));
    }
    PhaseProtocolResult res;
    res.second_derivative = R.back().back();
    res.extrapolation_residual = opt.levels > 1 ? std::abs(R.back().back() - R[opt.levels - 2].back()) : 0.0;

    // tr([X, rho][X, O]) = 2 <a|O|a> - 2 Re <X^2 psi|O psi>, a = X psi, O = U Z U^dagger
    auto psi_t = StateVector::all_up(L).amplitudes;
    ev.forward(psi_t, t);
    auto a = psi_t;
    apply_total(a, L, Axis::X);
    auto xx = a;
    apply_total(xx, L, Axis::X);
    auto O = [&](std::vector<cplx> v) {
        ev.backward(v, t);
        apply_total(v, L, Axis::Z);
        ev.forward(v, t);
        return v;
    };
    res.commutator_value = 2.0 * dot(a, O(a)).real() - 2.0 * dot(xx, O(psi_t)).real();
    return res;
}

void write_local_csv_header(std::ostream& out) { out << "t,r,local_otoc\n"; }

void write_local_csv_row(std::ostream& out, double t, int r, double value) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g\n", t, r, value);
    out << buf;
}

void write_global_csv_header(std::ostream& out) { out << "t,global_otoc,estimator_err\n"; }

void write_global_csv_row(std::ostream& out, double t, const Estimate& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t, e.value, e.error);
    out << buf;
}

}  // namespace otoc::quantum
