#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "otoc/lattice.hpp"

namespace otoc::spread {

// gillespie: exact event-driven sampling of the continuous-time chain.
// tau_leap: fixed or adaptive steps with Poisson hazards per spin.
// discrete: synchronous steps of length tau (default 1 time unit) where
// each occupied spin fills each empty spin with probability rate * tau.
enum class Integrator { gillespie, tau_leap, discrete };

Integrator parse_integrator(const std::string& name);
std::string to_string(Integrator i);

struct SpreadParams {
    // Multiplies every pairwise rate; 3/16 for the adamantane model.
    double infection_scale = 1.0;
    // Occupied spin j empties at death_ratio * (sum of rates from the other
    // occupied spins).
    double death_ratio = 1.0 / 3.0;
    double t_max = 1.0;
    // Spin index (site * M + k). Defaults to spin 0 of the occupied site
    // nearest the lattice centre.
    std::optional<std::size_t> seed_spin;
    Integrator integrator = Integrator::gillespie;
    // Step length for tau-leap (0 = adaptive) and discrete (0 = 1 unit).
    double tau = 0.0;
    // Fictitious uniform rate between spins of the same site. The physical
    // models keep this at zero (intra-molecular couplings average out).
    double intra_site_rate = 0.0;

    void validate() const;
};

// Occupation bitmask: one 64-bit word per site, bit k = spin k.
class SpreadState {
public:
    SpreadState() = default;
    SpreadState(std::size_t sites, int spins_per_site);

    bool occupied(std::size_t spin) const;
    int site_count(std::size_t site) const { return counts_[site]; }
    std::uint64_t site_bits(std::size_t site) const { return bits_[site]; }
    std::size_t popcount() const { return total_; }
    double time() const { return time_; }
    int spins_per_site() const { return spins_per_site_; }
    std::size_t sites() const { return bits_.size(); }

    void set(std::size_t spin);
    void clear(std::size_t spin);
    void set_time(double t) { time_ = t; }

private:
    std::vector<std::uint64_t> bits_;
    std::vector<std::uint8_t> counts_;
    std::size_t total_ = 0;
    double time_ = 0.0;
    int spins_per_site_ = 1;
};

struct TrajectoryEvent {
    double time;
    std::size_t occupied;
};
using Trajectory = std::vector<TrajectoryEvent>;

// Precomputed rate tables shared by all trials; immutable after
// construction and safe to share across workers.
class SpreadModel {
public:
    SpreadModel(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel, SpreadParams params);

    const lattice::SiteSet& sites() const { return *sites_; }
    const SpreadParams& params() const { return params_; }
    std::size_t seed_spin() const { return seed_spin_; }
    std::size_t seed_site() const { return seed_spin_ / static_cast<std::size_t>(spins_per_site_); }
    int spins_per_site() const { return spins_per_site_; }
    std::size_t total_spins() const { return sites_->total_spins(); }

    // Spin-to-spin rate lambda_ij (already multiplied by infection_scale).
    double spin_rate(std::size_t spin_i, std::size_t spin_j) const;
    // Inter-site rate table, rates already scaled.
    const lattice::NeighborTable& neighbors() const { return table_; }
    // Total attempt rate emitted by one occupied spin on `site`.
    double outgoing(std::size_t site) const { return outgoing_[site]; }
    std::span<const double> cumulative(std::size_t site) const;

private:
    const lattice::SiteSet* sites_;
    lattice::CouplingKernel kernel_;
    SpreadParams params_;
    lattice::NeighborTable table_;
    std::vector<double> outgoing_;
    std::vector<double> cumulative_;  // per-row running sums of table rates
    std::size_t seed_spin_ = 0;
    int spins_per_site_ = 1;
};

// One stochastic trajectory. advance_to() may be called with increasing
// targets; the exponential waiting time is memoryless, so stopping at a
// sample time and resuming is exact.
class Trial {
public:
    Trial(const SpreadModel& model, std::uint64_t rng_seed);
    ~Trial();
    Trial(Trial&&) noexcept;
    Trial& operator=(Trial&&) noexcept;

    void advance_to(double t, Trajectory* events = nullptr);
    const SpreadState& state() const;
    std::uint64_t events_processed() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Trajectory run_trial(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel, const SpreadParams& params,
                     std::uint64_t rng_seed);

struct TimeSeries {
    std::vector<double> times;
    std::vector<double> n_op_mean;
    std::vector<double> n_op_stderr;
    std::size_t trials = 0;

    void write_csv(std::ostream& out) const;
    static TimeSeries read_csv(std::istream& in);
};

// Raw per-trial samples kept by the ensemble runner.
struct EnsembleSamples {
    std::vector<double> sample_times;
    std::size_t seed_site = 0;
    // n_op[trial][sample]
    std::vector<std::vector<std::size_t>> n_op;
    // occupied spins per site summed over trials: site_sums[sample][site]
    std::vector<std::vector<double>> site_sums;
    std::size_t trials() const { return n_op.size(); }
};

struct EnsembleOptions {
    unsigned threads = 1;
    bool record_sites = true;
};

EnsembleSamples run_ensemble_samples(const SpreadModel& model, std::size_t n_trials,
                                     std::span<const double> sample_times, std::uint64_t base_seed,
                                     const EnsembleOptions& options = {});

TimeSeries summarize(const EnsembleSamples& samples);

TimeSeries run_ensemble(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel,
                        const SpreadParams& params, std::size_t n_trials, std::span<const double> sample_times,
                        std::uint64_t base_seed, unsigned threads = 1);

struct RadialBin {
    double r_lo;
    double r_hi;
    double occupation_prob;
    std::size_t spins;  // spins on occupied molecules in this bin
};

// Occupation probability against distance from the seed site. Summing
// probability * spins over bins reproduces the mean N_op.
std::vector<RadialBin> radial_profile(const SpreadModel& model, const EnsembleSamples& samples, std::size_t sample,
                                      double bin_width);

void write_profile_csv(std::ostream& out, double t, std::span<const RadialBin> bins, bool header = true);

// Brute-force master equation over all 2^n occupation patterns (n <= 12).
struct OracleResult {
    std::vector<double> times;
    std::vector<double> n_op_mean;
    std::vector<std::vector<double>> spin_occupation;  // [sample][spin]
};

constexpr std::size_t kOracleMaxSpins = 12;

OracleResult ctmc_oracle(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel,
                         const SpreadParams& params, std::span<const double> sample_times);

}  // namespace otoc::spread
