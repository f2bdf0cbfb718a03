#include "otoc/kn_space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "otoc/error.hpp"

namespace otoc::kn {

namespace {

constexpr const char* kModule = "kn-space";
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_choose(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double log_q(int K, int n) {
    n = std::abs(n);
    if (K < 0 || n > K) return kNegInf;
    double hi = kNegInf, sum = 0.0;
    // c runs while K - c >= c - n
    for (int c = n; 2 * c <= K + n; ++c) {
        const double term = log_choose(K, c) + log_choose(K - c, c - n);
        if (term > hi) {
            sum = sum * std::exp(hi - term) + 1.0;
            hi = term;
        } else {
            sum += std::exp(term - hi);
        }
    }
    return hi + std::log(sum);
}

double q_value(int K, int n) { return std::exp(log_q(K, n)); }

std::uint64_t binomial_exact(int n, int k) {
    if (n < 0 || k < 0 || k > n) return 0;
    if (n > 60) throw ValidationError(kModule, "exact binomial limited to n <= 60");
    static const auto table = [] {
        std::array<std::array<std::uint64_t, 61>, 61> t{};
        for (int i = 0; i <= 60; ++i) {
            t[i][0] = t[i][i] = 1;
            for (int j = 1; j < i; ++j) t[i][j] = t[i - 1][j - 1] + t[i - 1][j];
        }
        return t;
    }();
    return table[n][k];
}

std::uint64_t q_exact(int K, int n) {
    if (K > 30) throw ValidationError(kModule, "exact Q limited to K <= 30");
    n = std::abs(n);
    if (K < 0 || n > K) return 0;
    std::uint64_t q = 0;
    for (int c = n; c <= K; ++c) q += binomial_exact(K, c) * binomial_exact(K - c, c - n);
    return q;
}

namespace {

template <typename LogQ>
Rates rates_from(int K, int n, int N, LogQ&& lq_of) {
    if (N < 2) throw ValidationError(kModule, "N must be >= 2");
    if (K < 1 || K > N) throw ValidationError(kModule, "K must lie in [1, N]");
    if (std::abs(n) > K) throw ValidationError(kModule, "|n| must not exceed K");
    const double lq = lq_of(K, n);
    if (!std::isfinite(lq)) throw Error(kModule, "state (K, n) is unreachable");
    auto ratio = [&](int k, int a, int b) {
        const double la = lq_of(k, a), lb = lq_of(k, b);
        return (std::isfinite(la) ? std::exp(la - lq) : 0.0) + (std::isfinite(lb) ? std::exp(lb - lq) : 0.0);
    };
    const double grow = static_cast<double>(K) * (N - K) / (N - 1);
    const double shrink = static_cast<double>(K) * (K - 1) / (N - 1);
    Rates r;
    if (grow > 0) {
        r.grow_up = grow * ratio(K - 1, n, n + 1);
        r.grow_down = grow * ratio(K - 1, n, n - 1);
    }
    if (shrink > 0) {
        r.shrink_up = shrink * ratio(K - 2, n + 2, n + 1);
        r.shrink_down = shrink * ratio(K - 2, n - 2, n - 1);
    }
    // channels leaving the triangle carry no weight
    if (std::abs(n + 2) > K + 1) r.grow_up = 0;
    if (std::abs(n - 2) > K + 1) r.grow_down = 0;
    if (std::abs(n + 2) > K - 1) r.shrink_up = 0;
    if (std::abs(n - 2) > K - 1) r.shrink_down = 0;
    return r;
}

// log Q over 0 <= K <= N, 0 <= n <= K from a log-factorial table.
class LogQTable {
public:
    explicit LogQTable(int N) : N_(N), lf_(static_cast<std::size_t>(N) + 2), q_(static_cast<std::size_t>(N + 1) * (N + 1), kNegInf) {
        for (int i = 0; i <= N + 1; ++i) lf_[i] = std::lgamma(i + 1.0);
        for (int K = 0; K <= N; ++K) {
            for (int n = 0; n <= K; ++n) {
                double hi = kNegInf, sum = 0.0;
                for (int c = n; 2 * c <= K + n; ++c) {
                    const double term = lf_[K] - lf_[c] - lf_[K - c] + lf_[K - c] - lf_[c - n] - lf_[K - 2 * c + n];
                    if (term > hi) {
                        sum = sum * std::exp(hi - term) + 1.0;
                        hi = term;
                    } else {
                        sum += std::exp(term - hi);
                    }
                }
                q_[static_cast<std::size_t>(K) * (N + 1) + n] = hi + std::log(sum);
            }
        }
    }
    double operator()(int K, int n) const {
        n = std::abs(n);
        if (K < 0 || n > K) return kNegInf;
        return q_[static_cast<std::size_t>(K) * (N_ + 1) + n];
    }

private:
    int N_;
    std::vector<double> lf_;
    std::vector<double> q_;
};

}  // namespace

Rates transition_rates(int K, int n, int N) { return rates_from(K, n, N, log_q); }

KnDistribution::KnDistribution(int n_total)
    : n_total_(n_total),
      mass_(static_cast<std::size_t>(n_total) * static_cast<std::size_t>(2 * n_total + 1), 0.0) {
    if (n_total < 2) throw ValidationError(kModule, "N must be >= 2");
}

KnDistribution KnDistribution::initial(int n_total) {
    KnDistribution d(n_total);
    d.at(1, 0) = 1.0;
    return d;
}

double KnDistribution::total() const {
    double s = 0.0;
    for (double v : mass_) s += v;
    return s;
}

double KnDistribution::k_mean() const {
    double s = 0.0;
    for (int K = 1; K <= n_total_; ++K)
        for (int n = -K; n <= K; ++n) s += K * at(K, n);
    return s;
}

KnChain::KnChain(int N) : N_(N) {
    if (N < 2) throw ValidationError(kModule, "N must be >= 2");
    for (int s = 0; s < 2; ++s) {
        Layout& L = layout_[s];
        L.lo.assign(N + 2, 1);
        L.hi.assign(N + 2, 0);
        L.origin.assign(N + 2, 0);
        std::size_t next = 0;
        for (int K = 0; K <= N + 1; ++K) {
            int lo, hi;
            if (K == 0 || K == N + 1) {
                lo = 0;
                hi = N;  // zero rows spanning every j a neighbour can touch
            } else {
                // n = 2j - N + s with |n| <= K
                lo = std::max(0, (N - s - K + 1) / 2);
                hi = std::min(N, (N - s + K) / 2);
                L.lo[K] = lo;
                L.hi[K] = hi;
            }
            // storage covers [lo - 2, hi + 2]
            L.origin[K] = next + 2 - static_cast<std::size_t>(lo);
            next += static_cast<std::size_t>(hi - lo + 5);
        }
        L.size = next;
        for (auto& g : rate_[s]) g.assign(L.size, 0.0);
        outflow_[s].assign(L.size, 0.0);
    }
    const LogQTable table(N);
    for (int K = 1; K <= N; ++K) {
        for (int n = -K; n <= K; ++n) {
            const int s = (n + N) & 1, j = (n + N) >> 1;
            const Rates r = rates_from(K, n, N, table);
            const std::size_t c = layout_[s].at(K, j);
            rate_[s][0][c] = r.grow_up;
            rate_[s][1][c] = r.grow_down;
            rate_[s][2][c] = r.shrink_up;
            rate_[s][3][c] = r.shrink_down;
            outflow_[s][c] = r.total();
            max_outflow_ = std::max(max_outflow_, r.total());
        }
    }
}

Rates KnChain::rates(int K, int n) const { return transition_rates(K, n, N_); }

std::array<KnChain::Grid, 2> KnChain::split(const KnDistribution& d) const {
    if (d.n_total() != N_) throw ValidationError(kModule, "distribution N does not match chain");
    std::array<Grid, 2> v{Grid(layout_[0].size, 0.0), Grid(layout_[1].size, 0.0)};
    for (int K = 1; K <= N_; ++K)
        for (int n = -K; n <= K; ++n) {
            const int s = (n + N_) & 1;
            v[s][layout_[s].at(K, (n + N_) >> 1)] = d.at(K, n);
        }
    return v;
}

KnDistribution KnChain::join(const std::array<Grid, 2>& v) const {
    KnDistribution d(N_);
    for (int K = 1; K <= N_; ++K)
        for (int n = -K; n <= K; ++n) {
            const int s = (n + N_) & 1;
            d.at(K, n) = v[s][layout_[s].at(K, (n + N_) >> 1)];
        }
    return d;
}

void KnChain::apply(int s, const Grid& v, Grid& out, bool jump, double lambda) const {
    const Layout& L = layout_[s];
    const Grid& o = outflow_[s];
    const auto& r = rate_[s];
    const double inv_lambda = jump ? 0.0 : 1.0 / lambda;
    // padding cells are never written and stay zero
    for (int K = 1; K <= N_; ++K) {
        const std::size_t row = L.origin[K], below = L.origin[K - 1], above = L.origin[K + 1];
        if (jump) {
            auto p = [&](int c, std::size_t at) { return o[at] > 0 ? v[at] * r[c][at] / o[at] : 0.0; };
            for (int j = L.lo[K]; j <= L.hi[K]; ++j) {
                const std::size_t c = row + j;
                double acc = o[c] > 0 ? 0.0 : v[c];
                acc += p(0, below + j - 1) + p(1, below + j + 1) + p(2, above + j - 1) + p(3, above + j + 1);
                out[c] = acc;
            }
        } else {
            for (int j = L.lo[K]; j <= L.hi[K]; ++j) {
                const std::size_t c = row + j;
                // (K-1, n-2) grows up, (K-1, n+2) grows down, (K+1, n-2) shrinks up, (K+1, n+2) shrinks down
                const double in = v[below + j - 1] * r[0][below + j - 1] + v[below + j + 1] * r[1][below + j + 1] +
                                  v[above + j - 1] * r[2][above + j - 1] + v[above + j + 1] * r[3][above + j + 1];
                const double x = v[c] + (in - v[c] * o[c]) * inv_lambda;
                // flush masses far below double resolution
                out[c] = x > 1e-280 ? x : 0.0;
            }
        }
    }
}

KnDistribution KnChain::jump_step(const KnDistribution& d) const {
    auto v = split(d);
    std::array<Grid, 2> out{Grid(v[0].size()), Grid(v[1].size())};
    for (int s = 0; s < 2; ++s) apply(s, v[s], out[s], true, 0.0);
    KnDistribution res = join(out);
    res.step_index = d.step_index + 1;
    res.time = d.time;
    return res;
}

KnDistribution KnChain::lazy_step(const KnDistribution& d) const {
    KnDistribution out = jump_step(d);
    for (std::size_t i = 0; i < out.raw().size(); ++i) out.raw()[i] = 0.5 * (out.raw()[i] + d.raw()[i]);
    return out;
}

KnDistribution KnChain::propagate(const KnDistribution& d, double t) const {
    if (t < 0) throw ValidationError(kModule, "propagation time must be >= 0");
    auto v = split(d);
    std::array<Grid, 2> acc{Grid(v[0].size(), 0.0), Grid(v[1].size(), 0.0)};
    const double lambda = max_outflow_;
    const double lt = lambda * t;
    for (int s = 0; s < 2; ++s) {
        bool any = false;
        for (double x : v[s]) any = any || x != 0.0;
        if (!any) continue;
        Grid next(v[s].size(), 0.0);
        // Poisson(lt) weights in log space; sum until the upper tail is negligible
        for (int k = 0;; ++k) {
            const double w = std::exp(-lt + (k > 0 ? k * std::log(lt) : 0.0) - std::lgamma(k + 1.0));
            if (w > 0.0) {
                for (std::size_t i = 0; i < v[s].size(); ++i) acc[s][i] += w * v[s][i];
            }
            // past the mode the remaining tail is below w (k+1) / (k+1-lt)
            if (k >= lt && w * (k + 1.0) / (k + 1.0 - lt) < 1e-16) break;
            apply(s, v[s], next, false, lambda);
            std::swap(v[s], next);
        }
    }
    // fold the truncated tail back in so mass stays exactly conserved
    double before = d.total(), after = 0.0;
    for (const auto& g : acc)
        for (double x : g) after += x;
    if (after > 0.0)
        for (auto& g : acc)
            for (double& x : g) x *= before / after;
    KnDistribution res = join(acc);
    res.step_index = d.step_index;
    res.time = d.time + t;
    return res;
}

KnDistribution KnChain::stationary(double tol, int max_iter) const {
    auto cur = split(KnDistribution::initial(N_));
    const int s = N_ & 1;  // sector holding (1, 0)
    Grid next(cur[s].size(), 0.0);
    int it = 0;
    bool converged = false;
    for (; it < max_iter && !converged; ++it) {
        apply(s, cur[s], next, true, 0.0);
        double diff = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double lazy = 0.5 * (next[i] + cur[s][i]);
            diff += std::abs(lazy - cur[s][i]);
            next[i] = lazy;
        }
        std::swap(cur[s], next);
        converged = diff < tol;
    }
    if (!converged) throw Error(kModule, "stationary law not reached in " + std::to_string(max_iter) + " lazy steps");
    KnDistribution out = join(cur);
    out.step_index = it;
    return out;
}

std::vector<KnDistribution> evolve_master(int N, int n_steps, const EvolveOptions& options) {
    if (n_steps < 0) throw ValidationError(kModule, "n_steps must be >= 0");
    if (options.mode == Mode::continuous && !(options.dt > 0.0))
        throw ValidationError(kModule, "dt must be positive in continuous mode");
    const KnChain chain(N);
    std::vector<KnDistribution> out;
    out.reserve(static_cast<std::size_t>(n_steps) + 1);
    out.push_back(KnDistribution::initial(N));
    for (int s = 0; s < n_steps; ++s) {
        if (options.mode == Mode::jump_chain) {
            out.push_back(chain.jump_step(out.back()));
        } else {
            KnDistribution next = chain.propagate(out.back(), options.dt);
            next.step_index = out.back().step_index + 1;
            out.push_back(std::move(next));
        }
    }
    return out;
}

mqc::MQCSpectrum mqc_from_kn(const KnDistribution& d) {
    const int N = d.n_total();
    mqc::MQCSpectrum s = mqc::MQCSpectrum::zeros(N);
    for (int K = 1; K <= N; ++K)
        for (int n = -K; n <= K; ++n) s.g[static_cast<std::size_t>(n + N)] += d.at(K, n);
    s.symmetrize();
    s.normalize();
    return s;
}

void KnSeries::write_csv(std::ostream& out) const {
    out << "step,time,K_mean,second_moment\n";
    char buf[128];
    for (std::size_t i = 0; i < step.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(step[i]), time[i],
                      k_mean[i], second_moment[i]);
        out << buf;
    }
}

KnSeries otoc_series_kn(int N, int n_steps, const EvolveOptions& options) {
    if (n_steps < 0) throw ValidationError(kModule, "n_steps must be >= 0");
    if (options.mode == Mode::continuous && !(options.dt > 0.0))
        throw ValidationError(kModule, "dt must be positive in continuous mode");
    const KnChain chain(N);
    KnSeries series;
    KnDistribution cur = KnDistribution::initial(N);
    for (int s = 0; s <= n_steps; ++s) {
        if (s > 0) {
            if (options.mode == Mode::jump_chain) {
                cur = chain.jump_step(cur);
            } else {
                cur = chain.propagate(cur, options.dt);
                cur.step_index = s;
            }
        }
        series.step.push_back(s);
        series.time.push_back(options.mode == Mode::continuous ? s * options.dt : static_cast<double>(s));
        series.k_mean.push_back(cur.k_mean());
        series.second_moment.push_back(mqc::second_moment(mqc_from_kn(cur)));
    }
    return series;
}

}  // namespace otoc::kn
