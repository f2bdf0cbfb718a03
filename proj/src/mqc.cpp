#include "otoc/mqc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

namespace otoc::mqc {

namespace {

constexpr const char* kModule = "mqc-analysis";

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(v);
}

}  // namespace

double MQCSpectrum::at(int n) const {
    if (n_values.empty()) return 0.0;
    const int lo = n_values.front();
    if (n < lo || n > n_values.back()) return 0.0;
    return g[static_cast<std::size_t>(n - lo)];
}

double MQCSpectrum::total() const {
    double s = 0.0;
    for (double v : g) s += v;
    return s;
}

MQCSpectrum MQCSpectrum::zeros(int max_order) {
    MQCSpectrum s;
    for (int n = -max_order; n <= max_order; ++n) s.n_values.push_back(n);
    s.g.assign(s.n_values.size(), 0.0);
    return s;
}

void MQCSpectrum::symmetrize() {
    const std::size_t m = g.size();
    for (std::size_t i = 0; i < m / 2; ++i) {
        const double avg = 0.5 * (g[i] + g[m - 1 - i]);
        g[i] = g[m - 1 - i] = avg;
    }
}

void MQCSpectrum::normalize() {
    const double s = total();
    if (!(s > 0.0)) throw ValidationError(kModule, "cannot normalize a spectrum with nonpositive total");
    for (double& v : g) v /= s;
    normalization = Normalization::unit_sum;
}

void write_gn_csv(std::ostream& out, const std::string& label, double label_value, const MQCSpectrum& spec,
                  bool header) {
    if (header) out << label << ",n,g_n\n";
    char buf[96];
    for (std::size_t i = 0; i < spec.g.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g\n", label_value, spec.n_values[i], spec.g[i]);
        out << buf;
    }
}

std::vector<LabeledSpectrum> read_gn_csv(std::istream& in, std::string* label_name) {
    std::string line;
    if (!std::getline(in, line)) throw EmptyInputError(kModule, "g_n file is empty");
    const auto head = split_commas(line);
    if (head.size() != 3 || head[1] != "n" || head[2] != "g_n" || head[0].empty())
        throw MalformedRowError(kModule, "row 1: header must be <label>,n,g_n");
    if (label_name) *label_name = head[0];
    std::vector<LabeledSpectrum> out;
    std::vector<std::pair<int, double>> rows;
    auto flush = [&] {
        if (rows.empty()) return;
        int lo = rows.front().first, hi = lo;
        for (const auto& [n, g] : rows) lo = std::min(lo, n), hi = std::max(hi, n);
        MQCSpectrum s;
        for (int n = lo; n <= hi; ++n) s.n_values.push_back(n);
        s.g.assign(s.n_values.size(), 0.0);
        for (const auto& [n, g] : rows) s.g[static_cast<std::size_t>(n - lo)] += g;
        out.back().spectrum = std::move(s);
        rows.clear();
    };
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cols = split_commas(line);
        double label = 0, n = 0, g = 0;
        if (cols.size() != 3 || !parse_double(cols[0], label) || !parse_double(cols[1], n) || !parse_double(cols[2], g) ||
            n != std::floor(n))
            throw MalformedRowError(kModule, "row " + std::to_string(row) + ": malformed '" + line + "'");
        if (out.empty() || out.back().label != label) {
            flush();
            out.push_back({label, {}});
        }
        rows.emplace_back(static_cast<int>(n), g);
    }
    flush();
    if (out.empty()) throw EmptyInputError(kModule, "g_n file has no data rows");
    return out;
}

PhaseSweepResult gn_from_phase_sweep(std::span<const std::complex<double>> samples, double edge_tolerance) {
    const std::size_t m = samples.size();
    if (m < 3) throw ValidationError(kModule, "phase sweep needs at least 3 samples");
    const int edge = static_cast<int>((m - 1) / 2);
    PhaseSweepResult res;
    res.spectrum = MQCSpectrum::zeros(edge);
    double abs_total = 0.0;
    for (int n = -edge; n <= edge; ++n) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t k = 0; k < m; ++k) {
            // reduce n*k mod m before forming the angle to keep it exact
            const long long nk = (static_cast<long long>(n) * static_cast<long long>(k)) % static_cast<long long>(m);
            const double phi = 2.0 * std::numbers::pi * static_cast<double>(nk) / static_cast<double>(m);
            acc += samples[k] * std::polar(1.0, -phi);
        }
        acc /= static_cast<double>(m);
        res.spectrum.g[static_cast<std::size_t>(n + edge)] = acc.real();
        res.imag_residue = std::max(res.imag_residue, std::abs(acc.imag()));
        abs_total += std::abs(acc.real());
    }
    res.valid = res.imag_residue < 1e-8;
    const double edge_mass = std::abs(res.spectrum.g.front()) + std::abs(res.spectrum.g.back());
    if (abs_total > 0.0 && edge_mass > edge_tolerance * abs_total)
        throw AliasingError(kModule, "phase grid of " + std::to_string(m) + " points aliases: order " +
                                         std::to_string(edge) + " carries mass");
    return res;
}

std::vector<std::complex<double>> phase_sweep_from_gn(const MQCSpectrum& spec, std::size_t grid_size) {
    std::vector<std::complex<double>> out(grid_size);
    for (std::size_t k = 0; k < grid_size; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t i = 0; i < spec.g.size(); ++i) {
            const long long m = static_cast<long long>(grid_size);
            const long long nk = ((static_cast<long long>(spec.n_values[i]) * static_cast<long long>(k)) % m + m) % m;
            acc += spec.g[i] * std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(nk) / static_cast<double>(m));
        }
        out[k] = acc;
    }
    return out;
}

double second_moment(const MQCSpectrum& spec) {
    if (spec.normalization != Normalization::unit_sum)
        throw ValidationError(kModule, "second moment needs a unit-sum spectrum");
    double m2 = 0.0;
    for (std::size_t i = 0; i < spec.g.size(); ++i) {
        const double n = spec.n_values[i];
        m2 += n * n * spec.g[i];
    }
    return std::max(m2, 0.0);
}

ClusterFit cluster_size_fit(const MQCSpectrum& spec) {
    std::set<int> distinct;
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t points = 0;
    for (std::size_t i = 0; i < spec.g.size(); ++i) {
        const double w = spec.g[i];
        if (!(w > 0.0)) continue;
        const double x = static_cast<double>(spec.n_values[i]) * spec.n_values[i];
        const double y = std::log(w);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
        distinct.insert(std::abs(spec.n_values[i]));
        ++points;
    }
    if (distinct.size() < 3) throw NoFitError(kModule, "cluster-size fit needs at least 3 distinct |n| with g > 0");
    const double det = sw * sxx - sx * sx;
    if (!(det > 0.0)) throw NoFitError(kModule, "degenerate support for cluster-size fit");
    const double slope = (sw * sxy - sx * sy) / det;
    const double intercept = (sy - slope * sx) / sw;
    if (!(slope < 0.0)) throw NoFitError(kModule, "g_n does not decay with n; no cluster size");

    double rss = 0.0;
    for (std::size_t i = 0; i < spec.g.size(); ++i) {
        const double w = spec.g[i];
        if (!(w > 0.0)) continue;
        const double x = static_cast<double>(spec.n_values[i]) * spec.n_values[i];
        const double r = std::log(w) - intercept - slope * x;
        rss += w * r * r;
    }
    ClusterFit fit;
    fit.K = -1.0 / slope;
    fit.residual = rss;
    fit.points = points;
    if (points > 2) {
        // weighted LS: var(slope) = s^2 * sw / det with s^2 = rss / (sw * (m - 2) / m)
        const double s2 = rss / (sw * static_cast<double>(points - 2) / static_cast<double>(points));
        const double se_slope = std::sqrt(std::max(0.0, s2 * sw / det));
        fit.K_err = se_slope / (slope * slope);
    }
    return fit;
}

std::vector<std::string> analysis_flags(double cluster_size) {
    std::vector<std::string> flags;
    if (cluster_size > kWeakPolarizationCap) flags.emplace_back("weak-polarization-invalid");
    return flags;
}

nlohmann::json analysis_json(const MQCSpectrum& spec) {
    MQCSpectrum s = spec;
    s.symmetrize();
    if (s.normalization != Normalization::unit_sum) s.normalize();
    nlohmann::json j;
    const double m2 = second_moment(s);
    j["second_moment"] = m2;
    double size_for_flags = m2;
    try {
        const ClusterFit fit = cluster_size_fit(s);
        j["K"] = fit.K;
        j["K_err"] = fit.K_err;
        j["fit_residual"] = fit.residual;
        size_for_flags = std::max(size_for_flags, fit.K);
    } catch (const NoFitError& e) {
        j["K"] = nullptr;
        j["K_err"] = nullptr;
        j["no_fit"] = e.what();
    }
    j["flags"] = analysis_flags(size_for_flags);
    return j;
}

HamiltonianTag parse_tag(const std::string& name) {
    if (name == "DQ" || name == "dq") return HamiltonianTag::DQ;
    if (name == "YY" || name == "yy") return HamiltonianTag::YY;
    throw ValidationError(kModule, "unknown Hamiltonian tag '" + name + "'");
}

std::string to_string(HamiltonianTag tag) { return tag == HamiltonianTag::DQ ? "DQ" : "YY"; }

ExperimentSeries parse_experiment(std::istream& in, const ExperimentFormat& format) {
    if (!(format.time_unit_ms > 0.0)) throw ValidationError(kModule, "time unit must be positive");
    if (!(format.size_scale > 0.0)) throw ValidationError(kModule, "size scale must be positive");
    ExperimentSeries s;
    s.source = format.source;
    s.tag = format.tag;
    s.time_unit_ms = format.time_unit_ms;

    std::string line;
    std::size_t row = 0;
    bool have_header = false;
    bool has_err = false;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        if (!have_header) {
            const auto cols = split_commas(line);
            if (cols.size() < 2 || cols[0] != "t_ms" || cols[1] != "cluster_size" ||
                (cols.size() == 3 && cols[2] != "err") || cols.size() > 3)
                throw MalformedRowError(kModule, "row " + std::to_string(row) +
                                                     ": header must be t_ms,cluster_size[,err]");
            has_err = cols.size() == 3;
            have_header = true;
            continue;
        }
        const auto cols = split_commas(line);
        double t_ms = 0, size = 0, err = 0;
        const bool shape_ok = cols.size() == 2 || (has_err && cols.size() == 3);
        if (!shape_ok || !parse_double(cols[0], t_ms) || !parse_double(cols[1], size) ||
            (cols.size() == 3 && !cols[2].empty() && !parse_double(cols[2], err)))
            throw MalformedRowError(kModule, "row " + std::to_string(row) + ": malformed '" + line + "'");
        if (!(size > 0.0))
            throw NonPositiveSizeError(kModule, "row " + std::to_string(row) + ": cluster size must be positive");
        const double t = t_ms / format.time_unit_ms;
        if (!s.t.empty() && !(t > s.t.back()))
            throw UnsortedTimesError(kModule, "row " + std::to_string(row) + ": times must be strictly ascending");
        s.t.push_back(t);
        s.cluster_size.push_back(size * format.size_scale);
        if (cols.size() == 3 && !cols[2].empty())
            s.error.emplace_back(err * format.size_scale);
        else
            s.error.emplace_back(std::nullopt);
    }
    if (!have_header || s.t.empty()) throw EmptyInputError(kModule, "experiment file has no data rows");
    return s;
}

ExperimentSeries load_experiment(const std::filesystem::path& path, const ExperimentFormat& format) {
    std::ifstream in(path);
    if (!in) throw Error(kModule, "cannot open experiment file " + path.string());
    ExperimentFormat f = format;
    if (f.source.empty()) f.source = path.filename().string();
    return parse_experiment(in, f);
}

void write_experiment_csv(std::ostream& out, const ExperimentSeries& series) {
    bool any_err = false;
    for (const auto& e : series.error) any_err = any_err || e.has_value();
    out << (any_err ? "t_ms,cluster_size,err\n" : "t_ms,cluster_size\n");
    char buf[96];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", series.t[i] * series.time_unit_ms, series.cluster_size[i]);
        out << buf;
        if (any_err) {
            out << ',';
            if (series.error[i]) {
                std::snprintf(buf, sizeof buf, "%.17g", *series.error[i]);
                out << buf;
            }
        }
        out << '\n';
    }
}

}  // namespace otoc::mqc
