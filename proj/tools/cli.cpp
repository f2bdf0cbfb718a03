#include "cli.hpp"

#include <CLI11.hpp>
#include <charconv>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "otoc/error.hpp"
#include "otoc/kn_space.hpp"
#include "otoc/lattice.hpp"
#include "otoc/mqc.hpp"
#include "otoc/quantum.hpp"
#include "otoc/rng.hpp"
#include "otoc/scaling.hpp"
#include "otoc/spread.hpp"

#ifndef OTOC_VERSION
#define OTOC_VERSION "0.0.0"
#endif
#ifndef OTOC_GIT
#define OTOC_GIT "unknown"
#endif

namespace otoc::cli {

namespace {

namespace fs = std::filesystem;
constexpr const char* kModule = "cli-io";

[[noreturn]] void invalid(const std::string& what) { throw ValidationError(kModule, what); }

const std::set<std::string> kNullable = {
    "preset",          "kernel.cutoff_radius_nm", "spread.seed_spin",   "spread.profile_bin_nm",
    "spread.time_unit_ms", "analyze.gn_csv",      "analyze.experiment_csv", "fit.sim_csv",
    "fit.experiment_csv",  "fit.synthetic",       "fit.regime",
};

bool compatible(const json& base, const json& v, const std::string& path) {
    if (base.is_number_integer()) return v.is_number_integer();
    if (base.is_number()) {
        if (v.is_number()) return true;
        // alpha accepts "inf"
        return v.is_string() && v.get<std::string>() == "inf" && path.ends_with("alpha");
    }
    if (base.is_string() && path.ends_with("alpha")) return v.is_string() || v.is_number();
    return base.type() == v.type();
}

void merge(json& base, const json& over, const std::string& path) {
    if (!over.is_object()) invalid((path.empty() ? std::string("config") : path) + " must be an object");
    for (const auto& [k, v] : over.items()) {
        const std::string p = path.empty() ? k : path + "." + k;
        if (!base.contains(k)) invalid("unknown field '" + p + "'");
        json& b = base[k];
        if (b.is_object()) {
            merge(b, v, p);
        } else if (b.is_null() || (v.is_null() && kNullable.contains(p))) {
            b = v;
        } else if (!compatible(b, v, p)) {
            invalid("field '" + p + "' expects " + std::string(b.type_name()) + ", got " + v.type_name());
        } else {
            b = v;
        }
    }
}

bool nonnegative_integer(const json& v);

// Typed access with schema-style messages.
template <typename T>
T get(const json& cfg, const std::string& block, const std::string& key) {
    const std::string path = block + "." + key;
    try {
        const json& v = cfg.at(block).at(key);
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!nonnegative_integer(v))
                invalid("field '" + path + "' must be a nonnegative integer");
        }
        return v.get<T>();
    } catch (const json::exception& e) {
        invalid("field '" + path + "': " + e.what());
    }
}

double get_alpha(const json& cfg, const std::string& block) {
    const json& v = cfg.at(block).at("alpha");
    if (v.is_string()) {
        if (v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        invalid("field '" + block + ".alpha' must be a number or \"inf\"");
    }
    return get<double>(cfg, block, "alpha");
}

std::optional<double> get_opt(const json& cfg, const std::string& block, const std::string& key) {
    if (cfg.at(block).at(key).is_null()) return std::nullopt;
    return get<double>(cfg, block, key);
}

bool nonnegative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

std::uint64_t master_seed(const json& cfg) {
    const json& s = cfg.at("seed");
    if (!nonnegative_integer(s)) invalid("field 'seed' must be a nonnegative integer");
    return s.get<std::uint64_t>();
}

unsigned threads_of(const json& cfg) {
    const json& t = cfg.at("threads");
    if (!nonnegative_integer(t)) invalid("field 'threads' must be a nonnegative integer");
    return t.get<unsigned>();
}

// shortest representation that round-trips
std::string fmt(double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Error(kModule, "cannot create output directory " + dir_.string() + ": " + ec.message());
    }
    std::ofstream open(const std::string& name) {
        std::ofstream out(dir_ / name);
        if (!out) throw Error(kModule, "cannot write " + (dir_ / name).string());
        names_.push_back(name);
        return out;
    }
    void write_json(const std::string& name, const json& j) { open(name) << j.dump(2) << '\n'; }
    const fs::path& dir() const { return dir_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    fs::path dir_;
    std::vector<std::string> names_;
};

lattice::LatticeSpec lattice_spec(const json& cfg) {
    lattice::LatticeSpec s;
    s.kind = lattice::parse_lattice_kind(get<std::string>(cfg, "lattice", "kind"));
    s.linear_size = get<int>(cfg, "lattice", "linear_size");
    s.spins_per_site = get<int>(cfg, "lattice", "spins_per_site");
    s.lattice_constant_nm = get<double>(cfg, "lattice", "lattice_constant_nm");
    s.occupancy = get<double>(cfg, "lattice", "occupancy");
    s.boundary = lattice::parse_boundary(get<std::string>(cfg, "lattice", "boundary"));
    s.validate();
    return s;
}

lattice::CouplingKernel kernel_of(const json& cfg) {
    lattice::CouplingKernel k;
    k.alpha = get<double>(cfg, "kernel", "alpha");
    k.prefactor = get<double>(cfg, "kernel", "prefactor_rate_at_1nm");
    k.angular_mode = lattice::parse_angular_mode(get<std::string>(cfg, "kernel", "angular_mode"));
    const auto axis = get<std::vector<double>>(cfg, "kernel", "field_axis");
    if (axis.size() != 3) invalid("field 'kernel.field_axis' must have 3 components");
    k.field_axis = {axis[0], axis[1], axis[2]};
    k.cutoff_radius_nm = get_opt(cfg, "kernel", "cutoff_radius_nm");
    k.validate();
    return k;
}

spread::SpreadParams spread_params(const json& cfg) {
    spread::SpreadParams p;
    p.infection_scale = get<double>(cfg, "spread", "infection_scale");
    p.death_ratio = get<double>(cfg, "spread", "death_ratio");
    p.integrator = spread::parse_integrator(get<std::string>(cfg, "spread", "integrator"));
    p.tau = get<double>(cfg, "spread", "tau");
    p.intra_site_rate = get<double>(cfg, "spread", "intra_site_rate");
    if (!cfg["spread"]["seed_spin"].is_null()) p.seed_spin = get<std::size_t>(cfg, "spread", "seed_spin");
    const auto times = get<std::vector<double>>(cfg, "spread", "sample_times");
    if (times.empty()) invalid("field 'spread.sample_times' must not be empty");
    p.t_max = *std::max_element(times.begin(), times.end());
    p.validate();
    return p;
}

spread::EnsembleSamples run_spread_once(const json& cfg, const spread::SpreadModel& model, bool record_sites,
                                        std::ostream& log) {
    const auto trials = get<std::size_t>(cfg, "spread", "trials");
    if (trials == 0) invalid("field 'spread.trials' must be positive");
    log << "spread: " << model.sites().occupied_count() << " occupied sites, " << trials << " trials\n";
    spread::EnsembleOptions opt;
    opt.threads = threads_of(cfg);
    opt.record_sites = record_sites;
    return spread::run_ensemble_samples(model, trials, get<std::vector<double>>(cfg, "spread", "sample_times"),
                                        master_seed(cfg), opt);
}

json run_spread(const json& cfg, Outputs& out, std::ostream& log) {
    const auto spec = lattice_spec(cfg);
    const auto kernel = kernel_of(cfg);
    const auto params = spread_params(cfg);
    const auto full = lattice::build_lattice(spec);
    const auto dil_seed = get<std::uint64_t>(cfg, "lattice", "dilution_seed");
    const auto grid = get<std::vector<double>>(cfg, "spread", "occupancy_grid");
    auto check_sites = [](const lattice::SiteSet& s) {
        if (s.degenerate()) invalid("dilution left no occupied site to seed");
    };
    json summary;
    if (!grid.empty()) {
        auto sweep = out.open("sweep.csv");
        sweep << "p,t,n_op_mean,n_op_stderr,trials\n";
        for (double p : grid) {
            if (!(p > 0 && p <= 1)) invalid("occupancy grid values must lie in (0, 1]");
            const auto sites = lattice::dilute_sites(full, p, dil_seed);
            check_sites(sites);
            const spread::SpreadModel model(sites, kernel, params);
            const auto ts = spread::summarize(run_spread_once(cfg, model, false, log));
            auto f = out.open("timeseries_p" + fmt(p) + ".csv");
            ts.write_csv(f);
            for (std::size_t i = 0; i < ts.times.size(); ++i)
                sweep << fmt(p) << ',' << fmt(ts.times[i]) << ',' << fmt(ts.n_op_mean[i]) << ','
                      << fmt(ts.n_op_stderr[i]) << ',' << ts.trials << '\n';
            summary["final_n_op"][fmt(p)] = ts.n_op_mean.back();
        }
        return summary;
    }
    const auto sites = spec.occupancy < 1.0 ? lattice::dilute_sites(full, spec.occupancy, dil_seed) : full;
    check_sites(sites);
    const spread::SpreadModel model(sites, kernel, params);
    const auto bin = get_opt(cfg, "spread", "profile_bin_nm");
    if (bin && !(*bin > 0)) invalid("field 'spread.profile_bin_nm' must be positive");
    const auto samples = run_spread_once(cfg, model, bin.has_value(), log);
    const auto ts = spread::summarize(samples);
    auto f = out.open("timeseries.csv");
    ts.write_csv(f);
    if (bin) {
        auto pf = out.open("profile.csv");
        for (std::size_t i = 0; i < samples.sample_times.size(); ++i)
            spread::write_profile_csv(pf, samples.sample_times[i], spread::radial_profile(model, samples, i, *bin), i == 0);
    }
    for (std::size_t i = 0; i < ts.times.size(); ++i) summary["n_op"][fmt(ts.times[i])] = ts.n_op_mean[i];
    return summary;
}

json run_kn(const json& cfg, Outputs& out, std::ostream& log) {
    const int N = get<int>(cfg, "kn", "N");
    const int steps = get<int>(cfg, "kn", "steps");
    if (N < 1) invalid("field 'kn.N' must be >= 1");
    if (steps < 0) invalid("field 'kn.steps' must be >= 0");
    const std::string mode_name = get<std::string>(cfg, "kn", "mode");
    kn::Mode mode;
    if (mode_name == "jump_chain")
        mode = kn::Mode::jump_chain;
    else if (mode_name == "continuous")
        mode = kn::Mode::continuous;
    else
        invalid("field 'kn.mode' must be jump_chain or continuous");
    const double dt = get<double>(cfg, "kn", "dt");
    if (!(dt > 0)) invalid("field 'kn.dt' must be positive");
    const int every = get<int>(cfg, "kn", "gn_every");

    const kn::KnChain chain(N);
    auto d = kn::KnDistribution::initial(N);
    kn::KnSeries series;
    auto gn = out.open("gn.csv");
    bool gn_header_done = false;
    auto record = [&](const kn::KnDistribution& x, int step) {
        const auto spec = kn::mqc_from_kn(x);
        series.step.push_back(step);
        series.time.push_back(mode == kn::Mode::continuous ? step * dt : step);
        series.k_mean.push_back(x.k_mean());
        series.second_moment.push_back(mqc::second_moment(spec));
        if ((every > 0 && step % every == 0) || step == steps) {
            mqc::write_gn_csv(gn, "step", step, spec, !gn_header_done);
            gn_header_done = true;
        }
    };
    record(d, 0);
    for (int s = 1; s <= steps; ++s) {
        d = mode == kn::Mode::jump_chain ? chain.jump_step(d) : chain.propagate(d, dt);
        record(d, s);
    }
    auto sf = out.open("kn_series.csv");
    series.write_csv(sf);
    json summary{{"final_k_mean", series.k_mean.back()},
                 {"final_second_moment", series.second_moment.back()},
                 {"probability_total", d.total()}};
    if (get<bool>(cfg, "kn", "stationary")) {
        const auto st = chain.stationary();
        const auto spec = kn::mqc_from_kn(st);
        auto f = out.open("gn_stationary.csv");
        mqc::write_gn_csv(f, "step", static_cast<double>(st.step_index), spec, true);
        summary["stationary"] = mqc::analysis_json(spec);
        summary["stationary"]["k_mean"] = st.k_mean();
        summary["stationary"]["probability_total"] = st.total();
    }
    log << "kn: N=" << N << " steps=" << steps << " mode=" << mode_name << '\n';
    return summary;
}

quantum::OtocOptions otoc_options(const json& cfg) {
    quantum::OtocOptions o;
    o.axis = quantum::parse_axis(get<std::string>(cfg, "oracle", "axis"));
    const auto placement = get<std::string>(cfg, "oracle", "placement");
    if (placement == "second_at_zero")
        o.placement = quantum::TimePlacement::second_at_zero;
    else if (placement == "all_at_t")
        o.placement = quantum::TimePlacement::all_at_t;
    else
        invalid("field 'oracle.placement' must be second_at_zero or all_at_t");
    const auto est = get<std::string>(cfg, "oracle", "estimator");
    if (est == "random_states")
        o.estimator = quantum::Estimator::random_states;
    else if (est == "exact_trace")
        o.estimator = quantum::Estimator::exact_trace;
    else
        invalid("field 'oracle.estimator' must be random_states or exact_trace");
    o.n_states = get<int>(cfg, "oracle", "n_states");
    o.seed = master_seed(cfg);
    o.threads = threads_of(cfg);
    return o;
}

std::unique_ptr<quantum::Evolution> oracle_evolution(const json& cfg) {
    const auto system = get<std::string>(cfg, "oracle", "system");
    const int L = get<int>(cfg, "oracle", "n_spins");
    if (system == "floquet") {
        quantum::FloquetSpec f;
        f.n_spins = L;
        f.alpha = get_alpha(cfg, "oracle");
        f.J = get<double>(cfg, "oracle", "J");
        f.b = get<double>(cfg, "oracle", "b");
        f.h_std = get<double>(cfg, "oracle", "h_std");
        f.disorder_seed = get<std::uint64_t>(cfg, "oracle", "disorder_seed");
        return quantum::make_evolution(f);
    }
    if (system == "hamiltonian") {
        quantum::HamiltonianSpec h;
        h.model = quantum::parse_model(get<std::string>(cfg, "oracle", "model"));
        h.n_spins = L;
        if (L < 2 || L > quantum::kMaxSpins) invalid("field 'oracle.n_spins' must lie in [2, 24]");
        h.couplings = quantum::chain_couplings(L, get_alpha(cfg, "oracle"));
        h.seed = get<std::uint64_t>(cfg, "oracle", "model_seed");
        h.backend = quantum::parse_backend(get<std::string>(cfg, "oracle", "backend"));
        return quantum::make_evolution(h);
    }
    invalid("field 'oracle.system' must be floquet or hamiltonian");
}

json run_oracle(const json& cfg, Outputs& out, std::ostream& log) {
    const auto ev = oracle_evolution(cfg);
    const int L = ev->n_spins();
    const auto times = get<std::vector<double>>(cfg, "oracle", "times");
    const auto quantities = get<std::vector<std::string>>(cfg, "oracle", "quantities");
    const auto opt = otoc_options(cfg);
    const int a = get<int>(cfg, "oracle", "local_site");
    const int ref = get<int>(cfg, "oracle", "offdiag_ref");
    static const std::set<std::string> known = {"local", "global", "decomposition", "offdiag_profile", "mqc", "phase"};
    for (const auto& q : quantities)
        if (!known.contains(q)) invalid("unknown oracle quantity '" + q + "'");
    for (double t : times)
        if (!(t >= 0)) invalid("oracle times must be >= 0");
    json summary{{"normalization", {{"otoc", "Pauli operators, trace / 2^N"}, {"mqc", "I_z = Z/2, trace / tr(I_z^2)"}}}};
    auto want = [&](const char* q) { return std::find(quantities.begin(), quantities.end(), q) != quantities.end(); };

    if (want("local")) {
        auto f = out.open("local.csv");
        quantum::write_local_csv_header(f);
        for (double t : times)
            for (int r = 0; r < L; ++r) quantum::write_local_csv_row(f, t, r, quantum::local_otoc(*ev, a, r, t, opt).value);
    }
    if (want("global")) {
        auto f = out.open("global.csv");
        quantum::write_global_csv_header(f);
        for (double t : times) quantum::write_global_csv_row(f, t, quantum::global_otoc(*ev, t, opt));
    }
    if (want("decomposition")) {
        json rows = json::array();
        for (double t : times) {
            const auto d = quantum::otoc_decomposition(*ev, t, opt);
            rows.push_back({{"t", t},
                            {"global", d.global},
                            {"global_err", d.global_error},
                            {"diagonal_sum", d.diagonal_sum},
                            {"offdiag_sum", d.offdiag_sum},
                            {"max_offdiag_abs", d.max_offdiag_abs},
                            {"local", d.local}});
        }
        out.write_json("decomposition.json", rows);
    }
    if (want("offdiag_profile")) {
        auto f = out.open("offdiag.csv");
        f << "t,r,offdiag_otoc,estimator_err\n";
        for (double t : times) {
            const auto p = quantum::offdiag_profile(*ev, a, ref, t, opt);
            for (int r = 0; r < L; ++r) f << fmt(t) << ',' << r << ',' << fmt(p[r].value) << ',' << fmt(p[r].error) << '\n';
        }
    }
    if (want("mqc")) {
        auto f = out.open("gn.csv");
        json rows = json::array();
        bool header = true;
        for (double t : times) {
            const auto m = quantum::mqc_exact(*ev, t, get<int>(cfg, "oracle", "mqc_n_max"));
            mqc::write_gn_csv(f, "t", t, m.spectrum, header);
            header = false;
            rows.push_back({{"t", t},
                            {"fourier_moment", m.fourier_moment},
                            {"commutator_moment", m.commutator_moment},
                            {"imag_residue", m.imag_residue}});
        }
        summary["mqc"] = rows;
    }
    if (want("phase")) {
        quantum::PhaseProtocolOptions po;
        po.h = get<double>(cfg, "oracle", "phase_h");
        po.levels = get<int>(cfg, "oracle", "phase_levels");
        auto f = out.open("phase.csv");
        f << "t,second_derivative,commutator_value,extrapolation_residual\n";
        for (double t : times) {
            const auto r = quantum::phase_protocol_pure(*ev, t, po);
            f << fmt(t) << ',' << fmt(r.second_derivative) << ',' << fmt(r.commutator_value) << ','
              << fmt(r.extrapolation_residual) << '\n';
        }
    }
    log << "oracle: L=" << L << ", " << times.size() << " times\n";
    return summary;
}

mqc::ExperimentFormat experiment_format(const json& cfg, const std::string& block) {
    mqc::ExperimentFormat f;
    f.time_unit_ms = get<double>(cfg, block, "time_unit_ms");
    f.size_scale = get<double>(cfg, block, "size_scale");
    f.tag = mqc::parse_tag(get<std::string>(cfg, block, "tag"));
    return f;
}

json run_analyze(const json& cfg, Outputs& out, std::ostream& log) {
    const json& block = cfg.at("analyze");
    if (block.at("gn_csv").is_null() && block.at("experiment_csv").is_null())
        invalid("analyze needs 'analyze.gn_csv' or 'analyze.experiment_csv'");
    json summary;
    if (!block.at("gn_csv").is_null()) {
        const auto path = get<std::string>(cfg, "analyze", "gn_csv");
        std::ifstream in(path);
        if (!in) throw Error(kModule, "cannot open " + path);
        std::string label;
        const auto spectra = mqc::read_gn_csv(in, &label);
        json rows = json::array();
        for (const auto& s : spectra) {
            json r = mqc::analysis_json(s.spectrum);
            r[label] = s.label;
            rows.push_back(r);
        }
        out.write_json("analysis.json", rows);
        summary["spectra"] = spectra.size();
    }
    if (!block.at("experiment_csv").is_null()) {
        const auto path = get<std::string>(cfg, "analyze", "experiment_csv");
        const auto series = mqc::load_experiment(path, experiment_format(cfg, "analyze"));
        double max_size = 0;
        for (double s : series.cluster_size) max_size = std::max(max_size, s);
        json r{{"source", series.source},
               {"tag", mqc::to_string(series.tag)},
               {"time_unit_ms", series.time_unit_ms},
               {"points", series.size()},
               {"t", series.t},
               {"cluster_size", series.cluster_size},
               {"flags", mqc::analysis_flags(max_size)}};
        out.write_json("experiment.json", r);
        summary["experiment_points"] = series.size();
    }
    log << "analyze: done\n";
    return summary;
}

json run_fit(const json& cfg, Outputs& out, std::ostream& log) {
    const json& block = cfg.at("fit");
    if (block.at("sim_csv").is_null()) invalid("fit needs 'fit.sim_csv' (a t,n_op_mean,n_op_stderr,trials file)");
    const auto sim_path = get<std::string>(cfg, "fit", "sim_csv");
    std::ifstream in(sim_path);
    if (!in) throw Error(kModule, "cannot open " + sim_path);
    const scaling::SimCurve sim(spread::TimeSeries::read_csv(in));

    mqc::ExperimentSeries exp;
    json truth;
    if (!block.at("synthetic").is_null()) {
        const json& s = block.at("synthetic");
        try {
            const double J = s.at("J").get<double>(), shift = s.at("shift").get<double>();
            const auto t = s.at("times").get<std::vector<double>>();
            const double noise = s.value("log_noise", 0.0);
            const auto seed = s.value("seed", std::uint64_t{1});
            exp = scaling::synthetic_experiment(sim, J, shift, t, noise, seed);
            truth = {{"J", J}, {"shift", shift}, {"log_noise", noise}, {"seed", seed}};
        } catch (const json::exception& e) {
            invalid(std::string("field 'fit.synthetic': ") + e.what());
        }
        exp.time_unit_ms = get<double>(cfg, "fit", "time_unit_ms");
        auto f = out.open("synthetic_experiment.csv");
        mqc::write_experiment_csv(f, exp);
    } else if (!block.at("experiment_csv").is_null()) {
        exp = mqc::load_experiment(get<std::string>(cfg, "fit", "experiment_csv"), experiment_format(cfg, "fit"));
    } else {
        invalid("fit needs 'fit.experiment_csv' or 'fit.synthetic'");
    }

    scaling::FitOptions o;
    o.J_min = get<double>(cfg, "fit", "J_min");
    o.J_max = get<double>(cfg, "fit", "J_max");
    o.shift_min = get<double>(cfg, "fit", "shift_min");
    o.shift_max = get<double>(cfg, "fit", "shift_max");
    o.grid_J = get<int>(cfg, "fit", "grid_J");
    o.grid_shift = get<int>(cfg, "fit", "grid_shift");
    o.threads = threads_of(cfg);
    const auto fit = scaling::fit_experiment(sim, exp, o);
    std::optional<scaling::ScalingRegime> regime;
    if (!block.at("regime").is_null()) {
        try {
            regime = scaling::classify_regime(block.at("regime").at("alpha").get<double>(),
                                              block.at("regime").at("d").get<int>());
        } catch (const json::exception& e) {
            invalid(std::string("field 'fit.regime': ") + e.what());
        }
    }
    json report = scaling::fit_report(fit, regime);
    if (!truth.is_null()) report["synthetic_truth"] = truth;
    out.write_json("fit.json", report);
    log << "fit: J=" << fit.J << " shift=" << fit.shift << " residual=" << fit.residual << '\n';
    return {{"J", fit.J}, {"shift", fit.shift}, {"residual", fit.residual}};
}

json run_regimes(const json& cfg, Outputs& out, std::ostream&) {
    const auto alphas = get<std::vector<double>>(cfg, "regimes", "alphas");
    const int d = get<int>(cfg, "regimes", "d");
    const auto times = get<std::vector<double>>(cfg, "regimes", "times");
    json rows = json::array();
    auto f = out.open("predicted.csv");
    f << "alpha,d,t,log_global_otoc\n";
    for (double a : alphas) {
        const auto r = scaling::classify_regime(a, d);
        rows.push_back(r.to_json());
        for (double t : times) f << fmt(a) << ',' << d << ',' << fmt(t) << ',' << fmt(scaling::log_predicted_global_otoc(r, t)) << '\n';
    }
    out.write_json("regimes.json", rows);
    return {{"regimes", rows.size()}};
}

json error_record(const std::string& kind, const std::string& module, const std::string& message) {
    return {{"status", "error"}, {"kind", kind}, {"module", module}, {"message", message}};
}

}  // namespace

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s = {"spread", "kn", "oracle", "analyze", "fit", "regimes"};
    return s;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> s = {"adamantane-DQ", "adamantane-YY", "krb"};
    return s;
}

json default_config() {
    return {
        {"subcommand", "spread"},
        {"preset", nullptr},
        {"seed", 1},
        {"threads", 1},
        {"output_dir", "out"},
        {"lattice",
         {{"kind", "chain"},
          {"linear_size", 10},
          {"spins_per_site", 1},
          {"lattice_constant_nm", 1.0},
          {"occupancy", 1.0},
          {"boundary", "open"},
          {"dilution_seed", 7}}},
        {"kernel",
         {{"alpha", 3.0},
          {"prefactor_rate_at_1nm", 1.0},
          {"angular_mode", "isotropic"},
          {"field_axis", {0.0, 0.0, 1.0}},
          {"cutoff_radius_nm", nullptr}}},
        {"spread",
         {{"infection_scale", 1.0},
          {"death_ratio", 1.0 / 3.0},
          {"integrator", "gillespie"},
          {"tau", 0.0},
          {"intra_site_rate", 0.0},
          {"trials", 100},
          {"sample_times", {0.0, 1.0, 2.0, 3.0}},
          {"seed_spin", nullptr},
          {"occupancy_grid", json::array()},
          {"profile_bin_nm", nullptr},
          {"time_unit_ms", nullptr}}},
        {"kn",
         {{"N", 6}, {"steps", 50}, {"mode", "jump_chain"}, {"dt", 1.0}, {"stationary", false}, {"gn_every", 0}}},
        {"oracle",
         {{"system", "floquet"},
          {"n_spins", 8},
          {"alpha", 2.0},
          {"J", std::numbers::pi / 4},
          {"b", std::numbers::pi / 4},
          {"h_std", 0.5},
          {"disorder_seed", 1},
          {"model", "H_DQ"},
          {"backend", "auto"},
          {"model_seed", 0},
          {"times", {0.0, 1.0, 2.0, 4.0, 8.0}},
          {"quantities", {"global"}},
          {"axis", "Z"},
          {"placement", "second_at_zero"},
          {"estimator", "random_states"},
          {"n_states", 20},
          {"local_site", 0},
          {"offdiag_ref", 1},
          {"mqc_n_max", -1},
          {"phase_h", 0.02},
          {"phase_levels", 4}}},
        {"analyze",
         {{"gn_csv", nullptr}, {"experiment_csv", nullptr}, {"time_unit_ms", 0.4}, {"size_scale", 1.0}, {"tag", "DQ"}}},
        {"fit",
         {{"sim_csv", nullptr},
          {"experiment_csv", nullptr},
          {"time_unit_ms", 0.4},
          {"size_scale", 1.0},
          {"tag", "DQ"},
          {"synthetic", nullptr},
          {"J_min", 0.2},
          {"J_max", 10.0},
          {"shift_min", -5.0},
          {"shift_max", 5.0},
          {"grid_J", 80},
          {"grid_shift", 101},
          {"regime", nullptr}}},
        {"regimes", {{"alphas", {1.5, 2.0, 2.5, 3.0, 3.25, 3.5, 3.75, 4.0, 5.0}}, {"d", 3}, {"times", {2.0, 4.0, 8.0, 16.0}}}},
    };
}

json preset(const std::string& name) {
    json c = default_config();
    c["preset"] = name;
    if (name == "adamantane-DQ" || name == "adamantane-YY") {
        const double nn = 0.67;
        const std::string tag = name == "adamantane-DQ" ? "DQ" : "YY";
        c["lattice"].update({{"kind", "fcc"},
                             {"linear_size", 16},
                             {"spins_per_site", 16},
                             {"lattice_constant_nm", nn * std::numbers::sqrt2},
                             {"occupancy", 1.0},
                             {"boundary", "open"}});
        c["kernel"].update({{"alpha", 3.0},
                            {"prefactor_rate_at_1nm", lattice::CouplingKernel::unit_rate_prefactor(3.0, nn)},
                            {"cutoff_radius_nm", 3 * nn}});
        c["spread"].update({{"infection_scale", 3.0 / 16.0},
                            {"death_ratio", 1.0 / 3.0},
                            {"integrator", "discrete"},
                            {"tau", 1.0},
                            {"trials", 200},
                            {"sample_times", {0.0, 1.0, 2.0, 3.0}},
                            {"time_unit_ms", 0.4}});
        c["analyze"].update({{"time_unit_ms", 0.4}, {"tag", tag}});
        c["fit"].update({{"time_unit_ms", 0.4}, {"tag", tag}, {"regime", {{"alpha", 3.0}, {"d", 3}}}});
        return c;
    }
    if (name == "krb") {
        const double nn = 532.0;
        c["lattice"].update({{"kind", "simple-cubic"},
                             {"linear_size", 40},
                             {"spins_per_site", 1},
                             {"lattice_constant_nm", nn},
                             {"occupancy", 0.3},
                             {"boundary", "open"},
                             {"dilution_seed", 7}});
        c["kernel"].update({{"alpha", 3.0},
                            {"prefactor_rate_at_1nm", lattice::CouplingKernel::unit_rate_prefactor(3.0, nn)},
                            {"cutoff_radius_nm", 3 * nn}});
        c["spread"].update({{"infection_scale", 1.0},
                            {"death_ratio", 1.0 / 3.0},
                            {"integrator", "gillespie"},
                            {"tau", 0.0},
                            {"trials", 50},
                            {"sample_times", {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0}},
                            {"occupancy_grid", {0.15, 0.20, 0.25, 0.30}},
                            // 1 / (2 pi x 104 Hz)
                            {"time_unit_ms", 1e3 / (2 * std::numbers::pi * 104.0)}});
        c["fit"].update({{"regime", {{"alpha", 3.0}, {"d", 3}}}});
        return c;
    }
    invalid("unknown preset '" + name + "'");
}

json resolve_config(const std::string& subcommand, const std::optional<std::string>& preset_name,
                    const std::optional<json>& file_config, const json& overrides) {
    if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
        invalid("unknown subcommand '" + subcommand + "'");
    json file = file_config.value_or(json::object());
    if (file.contains("manifest_version")) {
        if (!file.contains("config")) invalid("manifest has no config");
        file = file["config"];
    }
    if (!file.is_object()) invalid("config must be a JSON object");
    std::optional<std::string> pname = preset_name;
    if (!pname && file.contains("preset") && file["preset"].is_string()) pname = file["preset"].get<std::string>();
    json c = pname ? preset(*pname) : default_config();
    merge(c, file, "");
    merge(c, overrides, "");
    if (pname) c["preset"] = *pname;
    c["subcommand"] = subcommand;
    return c;
}

RunResult run(const json& cfg, std::ostream& log) {
    const auto sub = cfg.at("subcommand").get<std::string>();
    Outputs out(cfg.at("output_dir").get<std::string>());
    json summary;
    if (sub == "spread")
        summary = run_spread(cfg, out, log);
    else if (sub == "kn")
        summary = run_kn(cfg, out, log);
    else if (sub == "oracle")
        summary = run_oracle(cfg, out, log);
    else if (sub == "analyze")
        summary = run_analyze(cfg, out, log);
    else if (sub == "fit")
        summary = run_fit(cfg, out, log);
    else if (sub == "regimes")
        summary = run_regimes(cfg, out, log);
    else
        invalid("unknown subcommand '" + sub + "'");
    RunResult res;
    res.outputs = out.names();
    res.summary = summary;
    json manifest{{"manifest_version", 1},
                  {"tool", "otoc"},
                  {"version", OTOC_VERSION},
                  {"git", OTOC_GIT},
                  {"config", cfg},
                  {"outputs", res.outputs},
                  {"summary", summary}};
    out.write_json("manifest.json", manifest);
    return res;
}

int main_entry(int argc, char** argv) {
    CLI::App app{"Operator-spreading and OTOC simulation toolkit"};
    app.require_subcommand(1);
    std::optional<std::string> config_path, preset_name, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--config", config_path, "JSON config file or manifest.json");
    app.add_option("--preset", preset_name, "Named preset")->check(CLI::IsMember(preset_names()));
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");
    app.add_option("--out", out_dir, "Output directory");
    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "Print the resolved config and exit");

    json overrides = json::object();
    std::optional<std::size_t> trials;
    std::optional<int> kn_N, kn_steps, oracle_L;
    std::optional<std::string> kn_mode, analyze_input, analyze_exp, fit_sim, fit_exp;
    std::optional<double> kn_dt;
    bool kn_stationary = false;
    std::vector<double> regime_alphas;
    std::optional<int> regime_d;

    auto* sp = app.add_subcommand("spread", "Stochastic operator-spreading ensemble");
    sp->add_option("--trials", trials, "Number of trajectories");
    auto* kn = app.add_subcommand("kn", "Kn-space master equation");
    kn->add_option("--N", kn_N, "Total spins N");
    kn->add_option("--steps", kn_steps, "Steps to evolve");
    kn->add_option("--mode", kn_mode, "jump_chain or continuous");
    kn->add_option("--dt", kn_dt, "Time per step in continuous mode");
    kn->add_flag("--stationary", kn_stationary, "Also write the stationary g_n");
    auto* oc = app.add_subcommand("oracle", "Exact small-system OTOC / MQC oracle");
    oc->add_option("--L", oracle_L, "Number of spins");
    auto* an = app.add_subcommand("analyze", "Cluster-size analysis of g_n spectra and experiment files");
    an->add_option("--input", analyze_input, "g_n CSV (<label>,n,g_n)");
    an->add_option("--experiment", analyze_exp, "Experiment CSV (t_ms,cluster_size[,err])");
    auto* ft = app.add_subcommand("fit", "Two-parameter fit of a simulated curve to an experiment");
    ft->add_option("--sim", fit_sim, "Simulated time series CSV");
    ft->add_option("--experiment", fit_exp, "Experiment CSV");
    auto* rg = app.add_subcommand("regimes", "Light-cone regime table and predicted global OTOC");
    rg->add_option("--alpha", regime_alphas, "Interaction exponents");
    rg->add_option("--d", regime_d, "Dimension");
    for (auto* s : {sp, kn, oc, an, ft, rg}) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << error_record("validation", kModule, e.what()).dump() << '\n';
        return kExitValidation;
    }

    std::string sub = app.get_subcommands().front()->get_name();
    if (seed) overrides["seed"] = *seed;
    if (threads) overrides["threads"] = *threads;
    if (out_dir) overrides["output_dir"] = *out_dir;
    if (trials) overrides["spread"]["trials"] = *trials;
    if (kn_N) overrides["kn"]["N"] = *kn_N;
    if (kn_steps) overrides["kn"]["steps"] = *kn_steps;
    if (kn_mode) overrides["kn"]["mode"] = *kn_mode;
    if (kn_dt) overrides["kn"]["dt"] = *kn_dt;
    if (kn_stationary) overrides["kn"]["stationary"] = true;
    if (oracle_L) overrides["oracle"]["n_spins"] = *oracle_L;
    if (analyze_input) overrides["analyze"]["gn_csv"] = *analyze_input;
    if (analyze_exp) overrides["analyze"]["experiment_csv"] = *analyze_exp;
    if (fit_sim) overrides["fit"]["sim_csv"] = *fit_sim;
    if (fit_exp) overrides["fit"]["experiment_csv"] = *fit_exp;
    if (!regime_alphas.empty()) overrides["regimes"]["alphas"] = regime_alphas;
    if (regime_d) overrides["regimes"]["d"] = *regime_d;

    std::string out_for_errors = out_dir.value_or("");
    auto fail = [&](const json& rec, int code) {
        std::cerr << rec.dump() << '\n';
        if (!out_for_errors.empty()) {
            std::error_code ec;
            fs::create_directories(out_for_errors, ec);
            std::ofstream f(fs::path(out_for_errors) / "error.json");
            if (f) f << rec.dump(2) << '\n';
        }
        return code;
    };
    try {
        std::optional<json> file;
        if (config_path) {
            std::ifstream in(*config_path);
            if (!in) invalid("cannot read config file " + *config_path);
            try {
                file = json::parse(in);
            } catch (const json::parse_error& e) {
                invalid("config is not valid JSON: " + std::string(e.what()));
            }
        }
        const json cfg = resolve_config(sub, preset_name, file, overrides);
        out_for_errors = cfg.at("output_dir").get<std::string>();
        if (print_defaults) {
            std::cout << cfg.dump(2) << '\n';
            return kExitOk;
        }
        const auto res = run(cfg, std::cerr);
        std::cout << json{{"status", "ok"}, {"output_dir", out_for_errors}, {"outputs", res.outputs}, {"summary", res.summary}}.dump()
                  << '\n';
        return kExitOk;
    } catch (const ValidationError& e) {
        return fail(error_record("validation", e.module(), e.what()), kExitValidation);
    } catch (const Error& e) {
        return fail(error_record("runtime", e.module(), e.what()), kExitRuntime);
    } catch (const std::exception& e) {
        return fail(error_record("runtime", kModule, e.what()), kExitRuntime);
    }
}

}  // namespace otoc::cli
