#include "otoc/spread.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>

#include "otoc/error.hpp"
#include "otoc/parallel.hpp"
#include "otoc/rng.hpp"

namespace otoc::spread {

namespace {

constexpr const char* kModule = "spread-engine";

[[noreturn]] void invalid(const std::string& what) { throw ValidationError(kModule, what); }

// Fenwick tree over nonnegative site weights with descent sampling.
class WeightTree {
public:
    explicit WeightTree(std::size_t n) : tree_(n + 1, 0.0), weights_(n, 0.0) {
        top_ = 1;
        while (top_ * 2 <= n) top_ *= 2;
    }

    void set(std::size_t i, double w) {
        const double delta = w - weights_[i];
        if (delta == 0.0) return;
        weights_[i] = w;
        total_ += delta;
        for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += delta;
        if (++updates_ >= kRebuildInterval) rebuild();
    }

    double weight(std::size_t i) const { return weights_[i]; }
    double total() const { return total_ > 0.0 ? total_ : 0.0; }

    // Index i with probability weight(i) / total(); u in [0, 1).
    std::size_t sample(double u) const {
        double target = u * total_;
        std::size_t pos = 0;
        for (std::size_t step = top_; step > 0; step >>= 1) {
            const std::size_t next = pos + step;
            if (next < tree_.size() && tree_[next] <= target) {
                pos = next;
                target -= tree_[next];
            }
        }
        return pos;  // zero-based index of the selected weight
    }

private:
    static constexpr std::uint64_t kRebuildInterval = 1u << 20;

    void rebuild() {
        std::fill(tree_.begin(), tree_.end(), 0.0);
        total_ = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            total_ += weights_[i];
            for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += weights_[i];
        }
        updates_ = 0;
    }

    std::vector<double> tree_;
    std::vector<double> weights_;
    std::size_t top_ = 1;
    double total_ = 0.0;
    std::uint64_t updates_ = 0;
};

// Index of the k-th set bit (k zero-based).
int nth_set_bit(std::uint64_t bits, int k) {
    for (int i = 0; i < k; ++i) bits &= bits - 1;
    return std::countr_zero(bits);
}

double sample_stderr(double sum, double sum_sq, std::size_t n) {
    if (n < 2) return 0.0;
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
}

}  // namespace

Integrator parse_integrator(const std::string& name) {
    if (name == "gillespie") return Integrator::gillespie;
    if (name == "tau-leap") return Integrator::tau_leap;
    if (name == "discrete") return Integrator::discrete;
    invalid("unknown integrator '" + name + "'");
}

std::string to_string(Integrator i) {
    switch (i) {
        case Integrator::gillespie: return "gillespie";
        case Integrator::tau_leap: return "tau-leap";
        case Integrator::discrete: return "discrete";
    }
    return "?";
}

void SpreadParams::validate() const {
    if (!(infection_scale > 0.0)) invalid("infection_scale must be positive");
    if (!(death_ratio >= 0.0)) invalid("death_ratio must be >= 0");
    if (!(t_max > 0.0)) invalid("t_max must be positive");
    if (!(tau >= 0.0)) invalid("tau must be >= 0");
    if (!(intra_site_rate >= 0.0)) invalid("intra_site_rate must be >= 0");
}

SpreadState::SpreadState(std::size_t sites, int spins_per_site)
    : bits_(sites, 0), counts_(sites, 0), spins_per_site_(spins_per_site) {}

bool SpreadState::occupied(std::size_t spin) const {
    const auto m = static_cast<std::size_t>(spins_per_site_);
    return (bits_[spin / m] >> (spin % m)) & 1u;
}

void SpreadState::set(std::size_t spin) {
    const auto m = static_cast<std::size_t>(spins_per_site_);
    auto& w = bits_[spin / m];
    const std::uint64_t bit = std::uint64_t{1} << (spin % m);
    if (w & bit) return;
    w |= bit;
    ++counts_[spin / m];
    ++total_;
}

void SpreadState::clear(std::size_t spin) {
    const auto m = static_cast<std::size_t>(spins_per_site_);
    auto& w = bits_[spin / m];
    const std::uint64_t bit = std::uint64_t{1} << (spin % m);
    if (!(w & bit)) return;
    w &= ~bit;
    --counts_[spin / m];
    --total_;
}

SpreadModel::SpreadModel(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel, SpreadParams params)
    : sites_(&sites), kernel_(kernel), params_(params), spins_per_site_(sites.spins_per_site()) {
    params_.validate();
    if (sites.size() == 0) invalid("empty site set");
    if (spins_per_site_ > 64) invalid("spins_per_site above 64 is not supported by the bitmask state");
    if (sites.degenerate()) invalid("no occupied molecule to seed (degenerate dilution)");

    const auto m = static_cast<std::size_t>(spins_per_site_);
    seed_spin_ = params_.seed_spin ? *params_.seed_spin : sites.central_occupied_site() * m;
    if (seed_spin_ >= sites.total_spins()) invalid("seed spin index out of range");
    if (!sites.occupied(seed_spin_ / m)) invalid("seed spin lies on a diluted molecule");

    table_ = lattice::build_neighbor_table(sites, kernel);
    for (auto& e : table_.entries) e.rate *= params_.infection_scale;

    outgoing_.assign(sites.size(), 0.0);
    cumulative_.resize(table_.entries.size());
    const double intra = params_.intra_site_rate * static_cast<double>(m - 1);
    for (std::size_t s = 0; s < sites.size(); ++s) {
        double acc = 0.0;
        for (std::size_t k = table_.offsets[s]; k < table_.offsets[s + 1]; ++k) {
            acc += table_.entries[k].rate;
            cumulative_[k] = acc;
        }
        outgoing_[s] = sites.occupied(s) ? acc * static_cast<double>(m) + intra : 0.0;
    }
}

double SpreadModel::spin_rate(std::size_t spin_i, std::size_t spin_j) const {
    const auto m = static_cast<std::size_t>(spins_per_site_);
    const std::size_t si = spin_i / m, sj = spin_j / m;
    if (spin_i == spin_j) return 0.0;
    if (si == sj) return params_.intra_site_rate;
    return params_.infection_scale * lattice::pairwise_rate(*sites_, si, sj, kernel_);
}

std::span<const double> SpreadModel::cumulative(std::size_t site) const {
    return {cumulative_.data() + table_.offsets[site], cumulative_.data() + table_.offsets[site + 1]};
}

struct Trial::Impl {
    const SpreadModel& model;
    Rng rng;
    SpreadState state;
    WeightTree tree;
    std::uint64_t events = 0;
    double thinning;  // max(1, death_ratio)

    Impl(const SpreadModel& m, std::uint64_t seed)
        : model(m),
          rng(seed),
          state(m.sites().size(), m.spins_per_site()),
          tree(m.sites().size()),
          thinning(std::max(1.0, m.params().death_ratio)) {
        state.set(m.seed_spin());
        refresh(m.seed_site());
    }

    void refresh(std::size_t site) { tree.set(site, state.site_count(site) * model.outgoing(site)); }

    void gillespie_to(double target, Trajectory* out) {
        const auto spins = static_cast<std::size_t>(model.spins_per_site());
        const double intra_total = model.params().intra_site_rate * static_cast<double>(spins - 1);
        const double birth_accept = 1.0 / thinning;
        const double death_accept = model.params().death_ratio / thinning;
        for (;;) {
            const double attempt_rate = thinning * tree.total();
            if (!(attempt_rate > 0.0)) break;
            const double dt = -std::log(uniform01(rng)) / attempt_rate;
            if (state.time() + dt > target) break;
            state.set_time(state.time() + dt);
            ++events;

            const std::size_t site = tree.sample(uniform01(rng));
            if (site >= state.sites() || state.site_count(site) == 0) continue;  // rounding at a zero-weight edge
            const int count = state.site_count(site);

            std::size_t target_spin;
            double branch = uniform01(rng) * model.outgoing(site);
            if (branch < intra_total) {
                const int source_bit = nth_set_bit(state.site_bits(site), static_cast<int>(uniform01(rng) * count));
                int other = static_cast<int>(uniform01(rng) * static_cast<double>(spins - 1));
                if (other >= source_bit) ++other;
                target_spin = site * spins + static_cast<std::size_t>(other);
            } else {
                branch = (branch - intra_total) / static_cast<double>(spins);
                const auto cum = model.cumulative(site);
                auto it = std::upper_bound(cum.begin(), cum.end(), branch);
                if (it == cum.end()) --it;
                const auto& entry = model.neighbors().row(site)[static_cast<std::size_t>(it - cum.begin())];
                const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(spins));
                target_spin = entry.site * spins + std::min(k, spins - 1);
            }

            const std::size_t target_site = target_spin / spins;
            if (!state.occupied(target_spin)) {
                if (birth_accept < 1.0 && uniform01(rng) >= birth_accept) continue;
                state.set(target_spin);
            } else {
                if (!(uniform01(rng) < death_accept)) continue;
                state.clear(target_spin);
            }
            refresh(target_site);
            if (out) out->push_back({state.time(), state.popcount()});
        }
        state.set_time(target);
    }

    // Synchronous updates. Tau-leap treats each spin's summed rate as a
    // Poisson hazard over the step; the discrete rule lets every ordered
    // (occupied, target) pair fire independently with probability rate * step.
    void synchronous_to(double target, Trajectory* out) {
        const auto& sites = model.sites();
        const auto spins = static_cast<std::size_t>(model.spins_per_site());
        const bool discrete = model.params().integrator == Integrator::discrete;
        const double d = model.params().death_ratio;
        const double intra = model.params().intra_site_rate;
        const double inf = std::numeric_limits<double>::infinity();
        // Log-survival of a single pair firing with probability q.
        auto log_miss = [](double q) { return q >= 1.0 ? -std::numeric_limits<double>::infinity() : std::log1p(-q); };

        std::vector<double> birth(sites.size(), 0.0), death(sites.size(), 0.0);
        std::vector<std::uint8_t> touched_flag(sites.size(), 0);
        std::vector<std::size_t> touched, occupied_sites;
        std::vector<std::pair<std::size_t, bool>> flips;
        while (state.time() < target) {
            touched.clear();
            occupied_sites.clear();
            auto touch = [&](std::size_t s) {
                if (!touched_flag[s]) {
                    touched_flag[s] = 1;
                    touched.push_back(s);
                }
            };
            for (std::size_t s = 0; s < sites.size(); ++s)
                if (state.site_count(s) > 0) occupied_sites.push_back(s);

            double step = model.params().tau;
            if (!discrete) {
                // Accumulate summed pressure first to pick an adaptive step.
                for (auto s : occupied_sites) {
                    touch(s);
                    for (const auto& e : model.neighbors().row(s)) {
                        birth[e.site] += e.rate * state.site_count(s);
                        touch(e.site);
                    }
                }
                double total_rate = 0.0;
                for (auto s : touched) {
                    const double n = state.site_count(s);
                    total_rate += (static_cast<double>(spins) - n) * (birth[s] + intra * n) +
                                  d * n * (birth[s] + intra * std::max(0.0, n - 1.0));
                }
                if (step == 0.0)
                    step = total_rate > 0.0 ? 0.1 * static_cast<double>(state.popcount()) / total_rate : inf;
                if (total_rate == 0.0) step = inf;
                step = std::min(step, target - state.time());
                for (auto s : touched) {
                    const double n = state.site_count(s);
                    const double pressure = birth[s];
                    birth[s] = -(pressure + intra * n) * step;
                    death[s] = -d * (pressure + intra * std::max(0.0, n - 1.0)) * step;
                }
            } else {
                if (step == 0.0) step = 1.0;
                for (auto s : occupied_sites) {
                    const double n = state.site_count(s);
                    touch(s);
                    for (const auto& e : model.neighbors().row(s)) {
                        birth[e.site] += n * log_miss(e.rate * step);
                        death[e.site] += n * log_miss(d * e.rate * step);
                        touch(e.site);
                    }
                }
                if (intra > 0.0)
                    for (auto s : occupied_sites) {
                        const double n = state.site_count(s);
                        birth[s] += n * log_miss(intra * step);
                        death[s] += (n - 1.0) * log_miss(d * intra * step);
                    }
                // A partial final step would change the rule; steps stay whole.
                if (state.time() + step > target + 1e-12 * std::max(1.0, target)) {
                    for (auto s : touched) {
                        birth[s] = death[s] = 0.0;
                        touched_flag[s] = 0;
                    }
                    break;
                }
            }

            flips.clear();
            for (auto s : touched) {
                const double p_birth = -std::expm1(birth[s]);
                const double p_death = -std::expm1(death[s]);
                if (p_birth > 0.0 || p_death > 0.0) {
                    for (std::size_t k = 0; k < spins; ++k) {
                        const std::size_t spin = s * spins + k;
                        const bool occ = state.occupied(spin);
                        const double p = occ ? p_death : p_birth;
                        if (p > 0.0 && uniform01(rng) < p) flips.emplace_back(spin, !occ);
                    }
                }
                birth[s] = death[s] = 0.0;
                touched_flag[s] = 0;
            }
            for (auto [spin, on] : flips) {
                if (on)
                    state.set(spin);
                else
                    state.clear(spin);
            }
            events += flips.size();
            if (step == inf) break;
            state.set_time(state.time() + step);
            if (!flips.empty() && out) out->push_back({state.time(), state.popcount()});
        }
        if (!discrete) state.set_time(target);
        for (std::size_t s = 0; s < sites.size(); ++s) refresh(s);
    }
};

Trial::Trial(const SpreadModel& model, std::uint64_t rng_seed) : impl_(std::make_unique<Impl>(model, rng_seed)) {}
Trial::~Trial() = default;
Trial::Trial(Trial&&) noexcept = default;
Trial& Trial::operator=(Trial&&) noexcept = default;

void Trial::advance_to(double t, Trajectory* events) {
    if (t < impl_->state.time()) throw Error(kModule, "trial cannot move backwards in time");
    if (impl_->model.params().integrator == Integrator::gillespie)
        impl_->gillespie_to(t, events);
    else
        impl_->synchronous_to(t, events);
}

const SpreadState& Trial::state() const { return impl_->state; }
std::uint64_t Trial::events_processed() const { return impl_->events; }

Trajectory run_trial(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel, const SpreadParams& params,
                     std::uint64_t rng_seed) {
    const SpreadModel model(sites, kernel, params);
    Trial trial(model, rng_seed);
    Trajectory events{{0.0, 1}};
    trial.advance_to(params.t_max, &events);
    return events;
}

void TimeSeries::write_csv(std::ostream& out) const {
    out << "t,n_op_mean,n_op_stderr,trials\n";
    char line[128];
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%zu\n", times[i], n_op_mean[i], n_op_stderr[i], trials);
        out << line;
    }
}

TimeSeries TimeSeries::read_csv(std::istream& in) {
    TimeSeries ts;
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,n_op_mean,n_op_stderr,trials", 0) != 0)
        throw ValidationError(kModule, "time series CSV header must be t,n_op_mean,n_op_stderr,trials");
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        double t, mean, err;
        std::size_t trials;
        char c1, c2, c3;
        if (!(ss >> t >> c1 >> mean >> c2 >> err >> c3 >> trials) || c1 != ',' || c2 != ',' || c3 != ',')
            throw ValidationError(kModule, "malformed time series row " + std::to_string(row));
        ts.times.push_back(t);
        ts.n_op_mean.push_back(mean);
        ts.n_op_stderr.push_back(err);
        ts.trials = trials;
    }
    return ts;
}

EnsembleSamples run_ensemble_samples(const SpreadModel& model, std::size_t n_trials,
                                     std::span<const double> sample_times, std::uint64_t base_seed,
                                     const EnsembleOptions& options) {
    if (n_trials < 1) invalid("n_trials must be >= 1");
    if (!std::is_sorted(sample_times.begin(), sample_times.end())) invalid("sample times must be ascending");
    if (!sample_times.empty() && sample_times.front() < 0.0) invalid("sample times must be >= 0");

    EnsembleSamples out;
    out.sample_times.assign(sample_times.begin(), sample_times.end());
    out.seed_site = model.seed_site();
    out.n_op.assign(n_trials, std::vector<std::size_t>(sample_times.size(), 0));

    const std::size_t n_sites = model.sites().size();
    std::vector<std::vector<std::uint64_t>> sums;
    if (options.record_sites) sums.assign(sample_times.size(), std::vector<std::uint64_t>(n_sites, 0));
    std::mutex sums_mutex;

    parallel_for(n_trials, options.threads, [&](std::size_t trial_index) {
        Trial trial(model, derive_seed(base_seed, trial_index));
        std::vector<std::pair<std::size_t, std::uint8_t>> snapshot;
        for (std::size_t s = 0; s < sample_times.size(); ++s) {
            trial.advance_to(sample_times[s]);
            out.n_op[trial_index][s] = trial.state().popcount();
            if (options.record_sites) {
                snapshot.clear();
                for (std::size_t site = 0; site < n_sites; ++site)
                    if (const int c = trial.state().site_count(site)) snapshot.emplace_back(site, c);
                // Integer sums are exact, so accumulation order is irrelevant.
                std::lock_guard lock(sums_mutex);
                for (auto [site, c] : snapshot) sums[s][site] += c;
            }
        }
    });

    if (options.record_sites) {
        out.site_sums.resize(sums.size());
        for (std::size_t s = 0; s < sums.size(); ++s) out.site_sums[s].assign(sums[s].begin(), sums[s].end());
    }
    return out;
}

TimeSeries summarize(const EnsembleSamples& samples) {
    TimeSeries ts;
    ts.times = samples.sample_times;
    ts.trials = samples.trials();
    for (std::size_t s = 0; s < samples.sample_times.size(); ++s) {
        double sum = 0.0, sum_sq = 0.0;
        for (const auto& trial : samples.n_op) {
            const double v = static_cast<double>(trial[s]);
            sum += v;
            sum_sq += v * v;
        }
        ts.n_op_mean.push_back(sum / static_cast<double>(ts.trials));
        ts.n_op_stderr.push_back(sample_stderr(sum, sum_sq, ts.trials));
    }
    return ts;
}

TimeSeries run_ensemble(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel,
                        const SpreadParams& params, std::size_t n_trials, std::span<const double> sample_times,
                        std::uint64_t base_seed, unsigned threads) {
    const SpreadModel model(sites, kernel, params);
    return summarize(run_ensemble_samples(model, n_trials, sample_times, base_seed, {threads, false}));
}

std::vector<RadialBin> radial_profile(const SpreadModel& model, const EnsembleSamples& samples, std::size_t sample,
                                      double bin_width) {
    if (!(bin_width > 0.0)) invalid("radial bin width must be positive");
    if (samples.trials() == 0 || sample >= samples.sample_times.size()) invalid("no trial sampled at requested time");
    if (samples.site_sums.empty()) invalid("ensemble was run without per-site records");
    const auto& sites = model.sites();
    const auto spins = static_cast<std::size_t>(model.spins_per_site());

    std::vector<double> occupied_sum;
    std::vector<std::size_t> spin_count;
    for (std::size_t s = 0; s < sites.size(); ++s) {
        if (!sites.occupied(s)) continue;
        const double r = s == samples.seed_site ? 0.0 : sites.distance(samples.seed_site, s);
        const auto bin = static_cast<std::size_t>(std::floor(r / bin_width + 1e-9));
        if (bin >= spin_count.size()) {
            spin_count.resize(bin + 1, 0);
            occupied_sum.resize(bin + 1, 0.0);
        }
        spin_count[bin] += spins;
        occupied_sum[bin] += samples.site_sums[sample][s];
    }
    std::vector<RadialBin> bins;
    const double trials = static_cast<double>(samples.trials());
    for (std::size_t b = 0; b < spin_count.size(); ++b) {
        if (spin_count[b] == 0) continue;
        bins.push_back({b * bin_width, (b + 1) * bin_width,
                        occupied_sum[b] / (trials * static_cast<double>(spin_count[b])), spin_count[b]});
    }
    return bins;
}

void write_profile_csv(std::ostream& out, double t, std::span<const RadialBin> bins, bool header) {
    if (header) out << "t,r_bin_lo,r_bin_hi,occupation_prob\n";
    char line[128];
    for (const auto& b : bins) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", t, b.r_lo, b.r_hi, b.occupation_prob);
        out << line;
    }
}

OracleResult ctmc_oracle(const lattice::SiteSet& sites, const lattice::CouplingKernel& kernel,
                         const SpreadParams& params, std::span<const double> sample_times) {
    params.validate();
    if (!std::is_sorted(sample_times.begin(), sample_times.end())) invalid("sample times must be ascending");
    const auto m = static_cast<std::size_t>(sites.spins_per_site());

    // Spins living on occupied molecules, in lattice order.
    std::vector<std::size_t> spin_site;
    std::size_t seed_local = kOracleMaxSpins + 1;
    const std::size_t seed_spin = params.seed_spin ? *params.seed_spin : sites.central_occupied_site() * m;
    for (std::size_t s = 0; s < sites.size(); ++s) {
        if (!sites.occupied(s)) continue;
        for (std::size_t k = 0; k < m; ++k) {
            if (s * m + k == seed_spin) seed_local = spin_site.size();
            spin_site.push_back(s);
        }
    }
    const std::size_t n = spin_site.size();
    if (n == 0) invalid("empty site set");
    if (n > kOracleMaxSpins) invalid("master-equation oracle limited to 12 spins");
    if (seed_local > n) invalid("seed spin lies on a diluted molecule");

    std::vector<double> lambda(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            lambda[i * n + j] = spin_site[i] == spin_site[j]
                                    ? params.intra_site_rate
                                    : params.infection_scale * lattice::pairwise_rate(sites, spin_site[i], spin_site[j], kernel);
        }

    const std::size_t dim = std::size_t{1} << n;
    // Per configuration: flip rate of every spin.
    std::vector<double> flip(dim * n, 0.0), exit(dim, 0.0);
    double uniform_rate = 0.0;
    for (std::size_t x = 0; x < dim; ++x) {
        for (std::size_t j = 0; j < n; ++j) {
            double pressure = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (i != j && ((x >> i) & 1u)) pressure += lambda[i * n + j];
            const double r = ((x >> j) & 1u) ? params.death_ratio * pressure : pressure;
            flip[x * n + j] = r;
            exit[x] += r;
        }
        uniform_rate = std::max(uniform_rate, exit[x]);
    }

    std::vector<double> p(dim, 0.0), v(dim), next(dim), acc(dim);
    p[std::size_t{1} << seed_local] = 1.0;

    // One application of the uniformized jump matrix I + Q / uniform_rate.
    auto jump = [&](const std::vector<double>& in, std::vector<double>& out) {
        for (std::size_t x = 0; x < dim; ++x) out[x] = in[x] * (1.0 - exit[x] / uniform_rate);
        for (std::size_t x = 0; x < dim; ++x) {
            if (in[x] == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                const double r = flip[x * n + j];
                if (r > 0.0) out[x ^ (std::size_t{1} << j)] += in[x] * r / uniform_rate;
            }
        }
    };

    // p(t + h) = sum_k Poisson(k; q h) J^k p(t). Chunks keep q h <= 30 so the
    // leading weight exp(-q h) stays representable; the Poisson tail left
    // out is below 1e-13 per chunk.
    auto propagate = [&](double h) {
        if (h <= 0.0 || uniform_rate == 0.0) return;
        const int chunks = std::max(1, static_cast<int>(std::ceil(uniform_rate * h / 30.0)));
        const double qh = uniform_rate * h / chunks;
        for (int c = 0; c < chunks; ++c) {
            v = p;
            double weight = std::exp(-qh);
            double mass = weight;
            for (std::size_t x = 0; x < dim; ++x) acc[x] = weight * v[x];
            for (int k = 1; 1.0 - mass > 1e-14 && k < 10000; ++k) {
                jump(v, next);
                std::swap(v, next);
                weight *= qh / k;
                mass += weight;
                for (std::size_t x = 0; x < dim; ++x) acc[x] += weight * v[x];
            }
            p = acc;
        }
    };

    OracleResult result;
    double now = 0.0;
    for (double t : sample_times) {
        propagate(t - now);
        now = t;
        double mean = 0.0;
        std::vector<double> occ(n, 0.0);
        for (std::size_t x = 0; x < dim; ++x) {
            if (p[x] == 0.0) continue;
            mean += p[x] * std::popcount(x);
            for (std::size_t j = 0; j < n; ++j)
                if ((x >> j) & 1u) occ[j] += p[x];
        }
        result.times.push_back(t);
        result.n_op_mean.push_back(mean);
        result.spin_occupation.push_back(std::move(occ));
    }
    return result;
}

}  // namespace otoc::spread
