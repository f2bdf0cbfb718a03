#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "otoc/lattice.hpp"
#include "otoc/mqc.hpp"

namespace otoc::quantum {

using cplx = std::complex<double>;

// Basis index bit k = 1 means spin k points down (Z_k = -1); index 0 is the
// all-up product state.
struct StateVector {
    int n_spins = 0;
    std::vector<cplx> amplitudes;

    static StateVector all_up(int n_spins);
    static StateVector basis(int n_spins, std::uint64_t index);
    // Gaussian amplitudes, normalized; depends only on (seed, n_spins).
    static StateVector random(int n_spins, std::uint64_t seed);
    double norm() const;
    std::size_t dim() const { return amplitudes.size(); }
};

constexpr int kMaxSpins = 24;

enum class Axis { X, Y, Z };
Axis parse_axis(const std::string& name);
char to_char(Axis a);

struct OperatorSpec {
    enum class Kind { pauli_string, total_spin_axis };
    Kind kind = Kind::pauli_string;
    std::vector<int> sites;
    std::vector<Axis> axes;  // one per site; total_spin_axis uses axes[0]

    static OperatorSpec pauli(int site, Axis axis);
    static OperatorSpec total(Axis axis);
    void validate(int n_spins) const;
};

// In-place single-site Pauli.
void apply_pauli(std::vector<cplx>& psi, int site, Axis axis);
// out = op * psi
std::vector<cplx> apply(const OperatorSpec& op, const std::vector<cplx>& psi, int n_spins);

struct FloquetSpec {
    int n_spins = 8;
    double alpha = std::numeric_limits<double>::infinity();
    double J = std::numbers::pi / 4;
    double b = std::numbers::pi / 4;
    double h_std = 0.0;
    std::uint64_t disorder_seed = 0;

    void validate() const;
    std::vector<double> fields() const;  // h_r, Gaussian(0, h_std) per site
};

enum class Model { H_DQ, H_YY, secular, generic_random, xx };
Model parse_model(const std::string& name);
std::string to_string(Model m);

enum class Backend { automatic, dense, chebyshev };
Backend parse_backend(const std::string& name);

struct HamiltonianSpec {
    Model model = Model::H_DQ;
    int n_spins = 0;
    // Symmetric L x L couplings D_ab (diagonal ignored).
    std::vector<std::vector<double>> couplings;
    // Seed of the fixed random coefficients of the generic model.
    std::uint64_t seed = 0;
    Backend backend = Backend::automatic;

    void validate() const;
};

// D_ab = scale * f(theta) / r^alpha between sites of a one-spin-per-site
// lattice; f = (3 cos^2 theta - 1) / 2 for dipolar, 1 for isotropic.
std::vector<std::vector<double>> couplings_from_sites(const lattice::SiteSet& sites, double alpha,
                                                      lattice::AngularMode mode, const lattice::Vec3& axis,
                                                      double scale = 1.0);
// Open chain with D_ab = 1 / |a - b|^alpha.
std::vector<std::vector<double>> chain_couplings(int n_spins, double alpha);

// Real coefficient times a Pauli string: i^{|x & z|} X^x Z^z.
struct PauliTerm {
    double coef;
    std::uint32_t x_mask;
    std::uint32_t z_mask;
};

std::vector<PauliTerm> hamiltonian_terms(const HamiltonianSpec& spec);

// Unitary evolution; forward applies U(t), backward U(t)^dagger. Floquet
// evolutions take integer period counts.
class Evolution {
public:
    virtual ~Evolution() = default;
    virtual int n_spins() const = 0;
    virtual bool discrete() const = 0;
    virtual void forward(std::vector<cplx>& psi, double t) const = 0;
    virtual void backward(std::vector<cplx>& psi, double t) const = 0;
};

std::unique_ptr<Evolution> make_evolution(const FloquetSpec& spec);
std::unique_ptr<Evolution> make_evolution(const HamiltonianSpec& spec);

StateVector evolve(const StateVector& state, const FloquetSpec& spec, int periods);
StateVector evolve(const StateVector& state, const HamiltonianSpec& spec, double t);

// Matrix-free Hamiltonian action, exposed for tests and tools.
class SparseHamiltonian {
public:
    SparseHamiltonian(int n_spins, const std::vector<PauliTerm>& terms);
    int n_spins() const { return n_spins_; }
    void apply(const std::vector<cplx>& in, std::vector<cplx>& out) const;
    // Gershgorin bound on the spectral radius.
    double spectral_bound() const { return bound_; }

private:
    int n_spins_;
    std::vector<std::uint32_t> x_masks_;
    std::vector<std::vector<cplx>> phases_;  // per x mask: sum of c_k (-1)^{|s & z_k|}
    double bound_ = 0.0;
};

// Dense matrix of the Hamiltonian, row-major 2^L x 2^L (L <= 12).
std::vector<cplx> dense_hamiltonian(int n_spins, const std::vector<PauliTerm>& terms);

enum class TimePlacement { second_at_zero, all_at_t };
enum class Estimator { exact_trace, random_states };

struct OtocOptions {
    Axis axis = Axis::Z;
    TimePlacement placement = TimePlacement::second_at_zero;
    Estimator estimator = Estimator::random_states;
    int n_states = 20;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct Estimate {
    double value = 0.0;
    double error = 0.0;  // standard error over random states; 0 for exact traces
};

// -tr([P_a(t), P_b]^2) / 2^N
Estimate local_otoc(const Evolution& ev, int a, int b, double t, const OtocOptions& opt = {});
// -tr([P(t), P]^2) / 2^N with P the total spin along the axis
Estimate global_otoc(const Evolution& ev, double t, const OtocOptions& opt = {});
// -tr([P_a(t), P_b][P_c(t), P_d]) / 2^N; its sum over all (a,b,c,d) is the
// global OTOC. Pass a = c for the fixed-probe off-diagonal terms.
Estimate offdiag_otoc(const Evolution& ev, int a, int b, int c, int d, double t, const OtocOptions& opt = {});

// Full decomposition of the global OTOC into pair terms.
struct OtocDecomposition {
    int n_spins = 0;
    std::vector<double> local;  // L x L, local[a * L + b]
    double global = 0.0;
    double diagonal_sum = 0.0;
    double offdiag_sum = 0.0;
    double max_offdiag_abs = 0.0;
    double global_error = 0.0;
};
OtocDecomposition otoc_decomposition(const Evolution& ev, double t, const OtocOptions& opt = {});

// |<[P_a(t), P_r][P_a(t), P_ref]>| for every r on random states; entry
// r = ref is the diagonal term.
std::vector<Estimate> offdiag_profile(const Evolution& ev, int a, int ref, double t, const OtocOptions& opt = {});

// MQC of I_z(t) = U^dagger I_z U from a phase sweep of
// I(phi) = tr(e^{i phi I_z} W e^{-i phi I_z} W) / tr(I_z^2), dense (L <= 12).
struct MqcExactResult {
    mqc::MQCSpectrum spectrum;
    double fourier_moment = 0.0;
    double commutator_moment = 0.0;  // -tr([I_z, W]^2) / tr(I_z^2)
    double imag_residue = 0.0;
};
MqcExactResult mqc_exact(const Evolution& ev, double t, int n_max = -1);

// Pure-state protocol: F(phi) = <chi|Z|chi>, chi = U^dagger e^{i phi X} U |up...up>.
// F''(0) = tr([X, rho(t)][X, Z(-t)]).
struct PhaseProtocolResult {
    double second_derivative = 0.0;   // Richardson-extrapolated central differences
    double extrapolation_residual = 0.0;
    double commutator_value = 0.0;    // tr([X, rho(t)][X, Z(-t)]) computed directly
};
struct PhaseProtocolOptions {
    double h = 0.02;
    int levels = 4;
};
PhaseProtocolResult phase_protocol_pure(const Evolution& ev, double t, const PhaseProtocolOptions& opt = {});
double phase_signal(const Evolution& ev, double t, double phi);

// CSV writers for the oracle outputs.
void write_local_csv_header(std::ostream& out);
void write_local_csv_row(std::ostream& out, double t, int r, double value);
void write_global_csv_header(std::ostream& out);
void write_global_csv_row(std::ostream& out, double t, const Estimate& e);

}  // namespace otoc::quantum
