#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpenkf/enkf.hpp"
#include "gpenkf/experiments.hpp"
#include "gpenkf/mcmc.hpp"
#include "gpenkf/mms.hpp"

namespace gpenkf::cli {

/// Invalid or unreadable configuration; the message starts with "<file>:<line>: ".
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Mode { Mms, Toy };

struct GeometryConfig {
    double length = 3.0;
    double dx = 0.025;
    double stim_length = 0.2;
    int sensors = 15;
    double sensor_from = 0.3;
    double sensor_to = 2.9;

    mms::Geometry build() const;
};

struct ModelConfig {
    GeometryConfig geometry;
    mms::PacingProtocol protocol;
    double dt = 0.0;  ///< <= 0 selects the stability rule
};

struct DesignConfig {
    int initial_size = 350;
    int lhs_restarts = 1000;
    double train_fraction = 0.87;
    int classifier_samples = 2000;
    double classifier_holdout = 0.2;
    int classifier_lhs_restarts = 10;
    double classifier_margin = 0.0;
    double classifier_learning_rate = 1.0;
    int classifier_max_iterations = 20000;
};

struct ToyConfig {
    std::vector<double> locations{0.5, 1.0, 2.0};
    std::vector<double> truth{-1.5, 2.0};
    double noise_sd = 0.05;
    int training_points = 50;
    int test_points = 200;
    double sigma_theta = experiments::kToySigmaTheta;
};

struct EmulationConfig {
    std::string ensemble;  ///< directory; empty: <output_dir>/ensemble
    double r2_floor = 0.95;
    int restarts = 10;
    int max_iterations = 200;
};

struct CalibrationConfig {
    std::string bank;          ///< empty: <output_dir>/bank.json
    std::string ensemble;      ///< empty: <output_dir>/ensemble (synthetic mMS data)
    std::string observations;  ///< optional observation JSON; synthetic data otherwise
    int truth_index = 0;       ///< validation member used as synthetic truth
    experiments::MeasurementSet measurement_set = experiments::MeasurementSet::S1S2APD;
    experiments::NoiseLevels noise;
    int ensemble_size = 500;
    int iterations = 50;
    std::optional<std::vector<double>> sigma_theta;  ///< default: mode-specific
    NoiseScaling noise_scaling = NoiseScaling::PerIteration;
    Perturbation perturbation = Perturbation::PerMember;
};

struct McmcSection {
    int chains = 10;
    int samples = 40000;
    int burn_in = 10000;
    int thin = 10;
    ProposalKind proposal = ProposalKind::Componentwise;
    double target_acceptance = 0.25;
    double anneal_fraction = 0.5;
    bool reset_outliers = true;
};

struct StudySection {
    int cases = 50;
    std::vector<experiments::MeasurementSet> sets{experiments::kMeasurementSets.begin(),
                                                  experiments::kMeasurementSets.end()};
};

struct RunConfig {
    Mode mode = Mode::Mms;
    std::uint64_t seed = 0;
    std::string output_dir = "gpenkf-out";
    int threads = 1;
    ModelConfig model;
    DesignConfig design;
    ToyConfig toy;
    EmulationConfig emulation;
    CalibrationConfig calibration;
    McmcSection mcmc;
    StudySection study;

    std::string ensemble_dir() const;  ///< resolved emulation.ensemble
    std::string bank_path() const;     ///< resolved calibration.bank
    std::string calibration_ensemble_dir() const;
};

/// Parses a configuration document. Unknown keys and wrong types are
/// rejected with the line of the offending key; `source` names the document
/// in messages.
RunConfig parse_config(const std::string& text, const std::string& source = "config");
RunConfig load_config(const std::string& path);

/// Every setting, defaults included, as canonical JSON. Paths that only
/// locate outputs (output_dir) and the thread count are left out.
std::string canonical_config(const RunConfig& cfg);

/// SHA-256 of canonical_config, hex encoded.
std::string config_hash(const RunConfig& cfg);

/// SHA-256 of arbitrary bytes, hex encoded.
std::string sha256_hex(const std::string& bytes);

std::string to_string(Mode m);

}  // namespace gpenkf::cli
