#pragma once

// Training-set construction: Latin hypercube designs, a logistic-regression
// screen on the four cell parameters, and the two-stage rejection pipeline
// that turns an LHS of tissue parameters into an emulator training ensemble.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpenkf/calibration.hpp"
#include "gpenkf/mms.hpp"

namespace gpenkf::design {

struct LhsDesign {
    Eigen::MatrixXd points;  ///< M x d, rows are points
    std::uint64_t seed = 0;
    double min_distance = 0.0;  ///< smallest pairwise distance in unit-cube coordinates
};

/// M-point Latin hypercube within the (finite) bounds of `space`. Among
/// `restarts` random designs the one with the largest minimal pairwise
/// distance is kept; restart r draws from derive_seed(seed, r).
LhsDesign lhs_sample(Eigen::Index M, const ParameterSpace& space, std::uint64_t seed, int restarts = 1000);

/// Smallest Euclidean distance between rows of `unit_points`.
double min_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& unit_points);

struct ClassifierOptions {
    double learning_rate = 1.0;
    int max_iterations = 20000;
    double gradient_tolerance = 1e-7;
    double l2 = 0.0;  ///< ridge penalty on the weights (not the intercept)
};

/// Logistic regression on standardized inputs: P(feasible | x) = sigmoid(w . z + b).
struct FeasibilityClassifier {
    Eigen::VectorXd input_mean;
    Eigen::VectorXd input_scale;
    Eigen::VectorXd weights;
    double intercept = 0.0;
    double threshold = 0.5;
    double margin = 0.0;  ///< accept only if P > threshold + margin
    int iterations = 0;

    double probability(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    bool accepts(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// Fraction of rows of X whose decision matches `labels`.
    double accuracy(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<bool>& labels) const;
};

/// Maximum-likelihood fit by full-batch gradient ascent. X is n x k with one
/// row per example. Throws Degenerate if all labels are equal.
FeasibilityClassifier train_classifier(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<bool>& labels,
                                       const ClassifierOptions& options = {});

/// The four cell parameters (tau_in, tau_out, tau_open, tau_close) of the mMS space.
ParameterSpace cell_space();

struct CellTrainingOptions {
    Eigen::Index samples = 2000;
    double holdout_fraction = 0.2;
    std::uint64_t seed = 0;
    int lhs_restarts = 10;
    mms::PacingProtocol protocol;
    ClassifierOptions classifier;
    double margin = 0.0;
    int threads = 1;
};

struct CellTrainingReport {
    FeasibilityClassifier classifier;
    Eigen::MatrixXd inputs;         ///< samples x 4
    std::vector<bool> labels;       ///< feasible
    std::vector<std::string> reasons;
    Eigen::Index training_count = 0;  ///< first rows used for fitting; the rest are held out
    double training_accuracy = 0.0;
    double holdout_accuracy = 0.0;
};

/// Labels a cell-parameter LHS with mms::cell_feasibility and fits the classifier.
CellTrainingReport train_cell_classifier(const CellTrainingOptions& options);

enum class PointStatus { Accepted, RejectedByClassifier, RejectedBySimulation };

std::string to_string(PointStatus s);

struct DesignPoint {
    int id = 0;                 ///< row in the initial LHS
    Eigen::VectorXd params;     ///< tau_in, tau_out, tau_open, tau_close, D
    PointStatus status = PointStatus::Accepted;
    double probability = 1.0;   ///< classifier P(feasible)
    std::string reason;         ///< empty when accepted
};

struct EnsembleOptions {
    Eigen::Index initial_size = 350;
    std::uint64_t seed = 0;
    int lhs_restarts = 1000;
    double train_fraction = 0.87;
    mms::Geometry geometry = mms::Geometry::cable();
    mms::PacingProtocol protocol;
    mms::SimulationOptions simulation;
    int threads = 1;
};

struct TrainingEnsemble {
    ParameterSpace space;
    std::vector<DesignPoint> points;  ///< every initial point with its fate
    std::vector<int> ids;             ///< survivors, in LHS order
    Eigen::MatrixXd params;           ///< survivors x 5
    Eigen::MatrixXd outputs;          ///< survivors x 45
    std::vector<std::string> labels;  ///< output labels
    std::vector<int> train_rows;      ///< rows of params/outputs used for fitting
    std::vector<int> validation_rows; ///< held-out rows

    Eigen::Index size() const noexcept { return params.rows(); }
    Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& rows) const;
};

/// Sizes of the train/validation split of n survivors: round(fraction * n), remainder.
std::pair<int, int> split_sizes(int n, double fraction);

/// LHS over the mMS box, classifier screen, tissue simulation of the survivors
/// and rejection of runs with missing outputs. Throws InsufficientSurvivors
/// when fewer than 2 d points remain.
TrainingEnsemble build_ensemble(const EnsembleOptions& options, const FeasibilityClassifier& classifier);

}  // namespace gpenkf::design
