#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "otoc/mqc.hpp"

namespace otoc::kn {

// log Q_{K,n}, Q_{K,n} = sum_{c=|n|}^{K} C(K,c) C(K-c, c-|n|). -inf where Q = 0
// (|n| > K or K < 0).
double log_q(int K, int n);
double q_value(int K, int n);
// Exact integer Q for 0 <= K <= 30.
std::uint64_t q_exact(int K, int n);
// Exact C(n, k) for n <= 60.
std::uint64_t binomial_exact(int n, int k);

struct Rates {
    double grow_up = 0;     // (K+1, n+2)
    double grow_down = 0;   // (K+1, n-2)
    double shrink_up = 0;   // (K-1, n+2)
    double shrink_down = 0; // (K-1, n-2)
    double total() const { return grow_up + grow_down + shrink_up + shrink_down; }
};

Rates transition_rates(int K, int n, int N);

// Probability mass on K in [1, N], n in [-N, N].
class KnDistribution {
public:
    KnDistribution() = default;
    explicit KnDistribution(int n_total);
    static KnDistribution initial(int n_total);  // delta at (1, 0)

    int n_total() const { return n_total_; }
    std::int64_t step_index = 0;
    double time = 0.0;  // continuous mode only

    double& at(int K, int n) { return mass_[index(K, n)]; }
    double at(int K, int n) const { return mass_[index(K, n)]; }
    double total() const;
    double k_mean() const;
    const std::vector<double>& raw() const { return mass_; }
    std::vector<double>& raw() { return mass_; }

private:
    std::size_t index(int K, int n) const {
        return static_cast<std::size_t>(K - 1) * static_cast<std::size_t>(2 * n_total_ + 1) +
               static_cast<std::size_t>(n + n_total_);
    }
    int n_total_ = 0;
    std::vector<double> mass_;
};

// jump_chain: each step moves all mass along the four channels with
// probabilities rate / total outflow. continuous: dP/dt from the
// unnormalized rates; one step advances `dt` time units.
enum class Mode { jump_chain, continuous };

struct EvolveOptions {
    Mode mode = Mode::jump_chain;
    double dt = 1.0;
};

// Precomputed rates over the triangle |n| <= K for one N. States are kept
// in a compact list so steps touch only reachable cells.
class KnChain {
public:
    explicit KnChain(int N);

    int n_total() const { return N_; }
    Rates rates(int K, int n) const;
    double max_outflow() const { return max_outflow_; }

    // One jump-chain step.
    KnDistribution jump_step(const KnDistribution& d) const;
    // Lazy step (I + P) / 2; same stationary law, aperiodic.
    KnDistribution lazy_step(const KnDistribution& d) const;
    // exp(Q t) d by uniformization.
    KnDistribution propagate(const KnDistribution& d, double t) const;

    // Stationary law of the jump chain reached from (1,0); step_index holds
    // the number of lazy steps taken.
    KnDistribution stationary(double tol = 1e-13, int max_iter = 200000) const;

private:
    // Mass and rates live on two parity sectors (n + N even / odd). Within a
    // sector, j = (n + N) / 2, so n -> n +- 2 is j -> j +- 1; each row K is
    // stored contiguously over its valid j range with two zero cells of
    // padding per side, and a step is a gather over neighbouring rows.
    using Grid = std::vector<double>;
    struct Layout {
        std::vector<int> lo, hi;           // valid j range of row K (empty rows have lo > hi)
        std::vector<std::size_t> origin;   // storage index of j = 0 in row K (may wrap below 0)
        std::size_t size = 0;
        std::size_t at(int K, int j) const { return origin[K] + static_cast<std::size_t>(j); }
    };
    std::array<Grid, 2> split(const KnDistribution& d) const;
    KnDistribution join(const std::array<Grid, 2>& v) const;
    // out = P v (jump) or v + (Q / lambda) v (uniformized)
    void apply(int sector, const Grid& v, Grid& out, bool jump, double lambda) const;

    int N_;
    std::array<Layout, 2> layout_;
    // per sector: rates of the four channels at the source cell, total outflow
    std::array<std::array<Grid, 4>, 2> rate_;
    std::array<Grid, 2> outflow_;
    double max_outflow_ = 0;
};

std::vector<KnDistribution> evolve_master(int N, int n_steps, const EvolveOptions& options = {});

// Marginal over K, symmetrized, unit-sum.
mqc::MQCSpectrum mqc_from_kn(const KnDistribution& d);

struct KnSeries {
    std::vector<std::int64_t> step;
    std::vector<double> time;  // step * dt in continuous mode, step otherwise
    std::vector<double> k_mean;
    std::vector<double> second_moment;

    void write_csv(std::ostream& out) const;
};

KnSeries otoc_series_kn(int N, int n_steps, const EvolveOptions& options = {});

}  // namespace otoc::kn
