#pragma once

// Synthetic calibration studies: measurement subsets, noisy synthetic data,
// the multi-case S1S2 study with field RMSEs, EnKF-vs-MCMC comparison, the
// pseudo-dynamics variance-inflation check and emulator learning curves.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpenkf/calibration.hpp"
#include "gpenkf/design.hpp"
#include "gpenkf/enkf.hpp"
#include "gpenkf/gp.hpp"
#include "gpenkf/io.hpp"
#include "gpenkf/markers.hpp"
#include "gpenkf/mcmc.hpp"
#include "gpenkf/mms.hpp"
#include "gpenkf/toy_model.hpp"

namespace gpenkf::experiments {

enum class MeasurementSet { S1 = 0, S1S2 = 1, S1S2APD = 2 };

inline constexpr std::array<MeasurementSet, 3> kMeasurementSets{MeasurementSet::S1, MeasurementSet::S1S2,
                                                                 MeasurementSet::S1S2APD};

/// "S1", "S1+S2", "S1+S2+APD"
std::string to_string(MeasurementSet s);
/// Inverse of to_string; throws InvalidArgument.
MeasurementSet parse_measurement_set(const std::string& text);
std::vector<mms::OutputType> output_types(MeasurementSet s);

/// Positions in `labels` ("<type>@<sensor>") whose type belongs to the set.
std::vector<int> selected_outputs(MeasurementSet s, const std::vector<std::string>& labels);

struct NoiseLevels {
    double lat = 1.0;  ///< ms, S1 and S2 activation times
    double apd = 2.0;  ///< ms

    double sd(mms::OutputType t) const noexcept { return t == mms::OutputType::APD ? apd : lat; }
};

struct CalibrationCase {
    int truth_id = 0;  ///< row of the training ensemble
    MeasurementSet measurement_set = MeasurementSet::S1S2APD;
    NoiseLevels noise;
    std::uint64_t seed = 0;
};

/// Selects the rows of the full output vector that belong to the case's
/// measurement set and adds N(0, sd^2) noise with R = diag(sd^2). The noise
/// is drawn for every output from Rng(seed) before selection, so cases that
/// share a seed share the noise on common outputs.
ObservationSet make_synthetic_obs(const Eigen::Ref<const Eigen::VectorXd>& outputs,
                                  const std::vector<std::string>& labels, const CalibrationCase& c);

/// Uncorrelated Gaussian centred in the box with sd = width / 4.
GaussianSummary box_initial_distribution(const ParameterSpace& space);

/// Held-out R^2 of every emulator on the ensemble's validation rows.
Eigen::VectorXd held_out_r2(const gp::EmulatorBank& bank, const design::TrainingEnsemble& ensemble);

struct LearningCurve {
    std::vector<int> sizes;  ///< training rows used (nested prefixes of train_rows)
    Eigen::MatrixXd r2;      ///< sizes x outputs, held-out R^2

    Eigen::VectorXd median() const;
    Eigen::VectorXd minimum() const;
};

LearningCurve r2_learning_curve(const design::TrainingEnsemble& ensemble, const std::vector<int>& sizes,
                                const gp::FitOptions& options = {}, int threads = 1);

struct StudyOptions {
    int n_cases = 50;
    std::vector<MeasurementSet> sets{kMeasurementSets.begin(), kMeasurementSets.end()};
    NoiseLevels noise;
    std::uint64_t seed = 0;
    Eigen::Index ensemble_size = 500;
    int iterations = 50;
    Eigen::VectorXd sigma_theta;  ///< empty: EnkfConfig::default_sigma_theta
    std::optional<GaussianSummary> initial;  ///< default: box_initial_distribution
    mms::Geometry geometry = mms::Geometry::cable();
    mms::PacingProtocol protocol;
    mms::SimulationOptions simulation;
    int threads = 1;
};

struct CaseReport {
    int case_index = 0;
    CalibrationCase calibration;
    Eigen::VectorXd truth;
    GaussianSummary posterior;
    std::array<double, 3> rmse{};       ///< per output type over all nodes; NaN if failed
    std::array<int, 3> missing_nodes{};  ///< nodes without a marker in either field
    bool ok = false;
    std::string error;                   ///< "<Kind>: message" when failed
    double enkf_seconds = 0.0;
    double simulation_seconds = 0.0;
};

struct Quantiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    int count = 0;
};

/// Linear-interpolation quantiles of the finite entries.
Quantiles quantiles(std::vector<double> values);

double pearson_correlation(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

struct StudyReport {
    std::vector<std::string> parameter_names;
    std::vector<MeasurementSet> sets;
    std::vector<CaseReport> cases;  ///< case-major, then set in `sets` order

    std::vector<const CaseReport*> of(MeasurementSet s, bool ok_only = true) const;
    std::vector<const CaseReport*> failed() const;

    /// Truth-vs-posterior-mean correlation of parameter j over successful cases.
    double correlation(MeasurementSet s, Eigen::Index j) const;
    Quantiles rmse_quantiles(MeasurementSet s, mms::OutputType t) const;
};

/// Case i takes validation member i mod n_validation as truth with noise seed
/// derive_seed(seed, i); its EnKF for set s uses derive_seed(seed, i, 1 + s).
/// Failures of single cases are recorded, not thrown.
StudyReport run_study(const StudyOptions& options, const gp::EmulatorBank& bank,
                      const design::TrainingEnsemble& ensemble);

/// Columns case, set, truth_id, then truth_/mean_/sd_ for each parameter, one row per case and set.
io::Table scatter_table(const StudyReport& report, const io::Metadata& meta = {});
/// Columns set, type, count, min, q1, median, q3, max.
io::Table rmse_table(const StudyReport& report, const io::Metadata& meta = {});
/// Summary document: correlations, RMSE quantiles, failures.
std::string study_json(const StudyReport& report, const io::Metadata& meta = {});

struct ComparisonReport {
    std::vector<std::string> names;
    Eigen::VectorXd enkf_mean, mcmc_mean;
    Eigen::VectorXd enkf_sd, mcmc_sd;
    Eigen::VectorXd standard_error;  ///< combined Monte Carlo standard error of the mean difference
    Eigen::VectorXd mean_z;          ///< (enkf - mcmc) / standard_error
    Eigen::VectorXd sd_ratio;        ///< enkf_sd / mcmc_sd
    Eigen::MatrixXd enkf_draws;      ///< final ensemble, one member per row
    Eigen::MatrixXd mcmc_draws;      ///< pooled chains, one draw per row

    double max_abs_z() const { return mean_z.cwiseAbs().maxCoeff(); }
    double max_sd_relative_error() const { return (sd_ratio.array() - 1.0).abs().maxCoeff(); }
};

/// EnKF standard error sd / sqrt(N); MCMC standard error sd / sqrt(ESS).
ComparisonReport compare_posteriors(const EnkfResult& enkf, const McmcResult& mcmc,
                                    const std::vector<std::string>& names);

/// Runs both samplers on the same data. Throws InvalidArgument unless the
/// MCMC prior and bounds equal the EnKF initial distribution and space.
ComparisonReport compare_enkf_mcmc(const EnkfConfig& enkf, const McmcConfig& mcmc, const ObservationOperator& op,
                                   const ObservationSet& obs);

struct InflationReport {
    Eigen::VectorXd trace_with;     ///< per seed, sigma_theta as configured
    Eigen::VectorXd trace_without;  ///< per seed, sigma_theta = 0
    double mean_difference = 0.0;
    double standard_error = 0.0;
    double bound = 0.0;             ///< K * trace(sigma_theta sigma_theta^T)
};

/// Paired runs (same seed) with and without pseudo-dynamics for seeds
/// derive_seed(seed, r), r < n_seeds.
InflationReport variance_inflation(const EnkfConfig& cfg, const ObservationOperator& op, const ObservationSet& obs,
                                   int n_seeds, std::uint64_t seed);

/// Pseudo-dynamics intensity of the toy runs per step: 0.01 per unit time at a
/// step of 0.01.
inline constexpr double kToySigmaTheta = 1e-3;

/// The cubic two-parameter problem with three measurement locations.
struct ToyProblem {
    Eigen::Vector2d truth = toy_truth();
    Eigen::VectorXd locations = toy_locations();
    double noise_sd = 0.05;

    Eigen::VectorXd outputs(const Eigen::Ref<const Eigen::Vector2d>& theta) const;
    std::vector<std::string> labels() const;  ///< "y@<i>"
    /// Truth outputs plus N(0, noise_sd^2) noise from Rng(seed).
    ObservationSet observations(std::uint64_t seed) const;
    /// One emulator per location trained on an n-point maximin LHS of [-5, 5]^2.
    gp::EmulatorBank emulator(int n_points, std::uint64_t seed, const gp::FitOptions& options = {}) const;
    /// N(0, I) initial distribution, N = 500, K = 50, sigma_theta = kToySigmaTheta.
    EnkfConfig enkf_config(std::uint64_t seed) const;
};

}  // namespace gpenkf::experiments
