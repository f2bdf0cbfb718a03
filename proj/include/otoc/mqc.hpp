#pragma once

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "otoc/error.hpp"
#include "json.hpp"

namespace otoc::mqc {

enum class Normalization { raw, unit_sum };

// Coherence intensities g_n over a contiguous, symmetric range of orders.
struct MQCSpectrum {
    std::vector<int> n_values;
    std::vector<double> g;
    Normalization normalization = Normalization::raw;

    int max_order() const { return n_values.empty() ? 0 : n_values.back(); }
    double at(int n) const;  // 0 outside the stored range
    double total() const;

    static MQCSpectrum zeros(int max_order);
    // g_n -> (g_n + g_{-n}) / 2
    void symmetrize();
    // Rescales to unit sum; throws when the total is not positive.
    void normalize();
};

// Writes `<label>,n,g_n` rows, e.g. label "t" or "step".
void write_gn_csv(std::ostream& out, const std::string& label, double label_value, const MQCSpectrum& spec,
                  bool header = true);

struct LabeledSpectrum {
    double label = 0;
    MQCSpectrum spectrum;  // raw normalization; missing orders filled with 0
};
// Reads `<label>,n,g_n` rows; rows sharing a label value form one spectrum.
std::vector<LabeledSpectrum> read_gn_csv(std::istream& in, std::string* label_name = nullptr);

class AliasingError : public Error {
public:
    using Error::Error;
};

struct PhaseSweepResult {
    MQCSpectrum spectrum;
    double imag_residue = 0.0;  // max |Im g_n|
    bool valid = true;          // imag_residue below 1e-8
};

// Grid length used for orders up to n_max; leaves one empty order past
// n_max so aliasing shows up as mass at the edge.
inline std::size_t sweep_size(int n_max) { return static_cast<std::size_t>(2 * n_max + 3); }

// Inverse DFT of I(phi_k), phi_k = 2 pi k / M. Returns orders |n| <= (M-1)/2
// in raw normalization. Throws AliasingError when the edge order carries
// mass above `edge_tolerance` times the total.
PhaseSweepResult gn_from_phase_sweep(std::span<const std::complex<double>> samples, double edge_tolerance = 1e-9);

// Forward transform: I(phi_k) = sum_n g_n e^{i n phi_k} on an M-point grid.
std::vector<std::complex<double>> phase_sweep_from_gn(const MQCSpectrum& spec, std::size_t grid_size);

// sum n^2 g_n; requires unit-sum normalization.
double second_moment(const MQCSpectrum& spec);

struct ClusterFit {
    double K = 0.0;
    double K_err = 0.0;
    double residual = 0.0;  // weighted sum of squared log residuals
    std::size_t points = 0;
};

class NoFitError : public Error {
public:
    using Error::Error;
};

// Weighted least squares of log g_n = c - n^2 / K with weights g_n.
ClusterFit cluster_size_fit(const MQCSpectrum& spec);

// Weakly polarized expansion stops being valid past this cluster size.
constexpr double kWeakPolarizationCap = 1e5;

std::vector<std::string> analysis_flags(double cluster_size);

nlohmann::json analysis_json(const MQCSpectrum& spec);

// Experimental cluster-size series.
enum class HamiltonianTag { DQ, YY };

struct ExperimentFormat {
    double time_unit_ms = 0.4;
    // Multiplies the file's cluster sizes before fitting.
    double size_scale = 1.0;
    std::string source;
    HamiltonianTag tag = HamiltonianTag::DQ;
};

struct ExperimentSeries {
    std::vector<double> t;  // simulation units
    std::vector<double> cluster_size;
    std::vector<std::optional<double>> error;
    std::string source;
    HamiltonianTag tag = HamiltonianTag::DQ;
    double time_unit_ms = 0.4;

    std::size_t size() const { return t.size(); }
};

class EmptyInputError : public ValidationError {
public:
    using ValidationError::ValidationError;
};
class MalformedRowError : public ValidationError {
public:
    using ValidationError::ValidationError;
};
class UnsortedTimesError : public ValidationError {
public:
    using ValidationError::ValidationError;
};
class NonPositiveSizeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

ExperimentSeries parse_experiment(std::istream& in, const ExperimentFormat& format = {});
ExperimentSeries load_experiment(const std::filesystem::path& path, const ExperimentFormat& format = {});
void write_experiment_csv(std::ostream& out, const ExperimentSeries& series);

HamiltonianTag parse_tag(const std::string& name);
std::string to_string(HamiltonianTag tag);

}  // namespace otoc::mqc
