#pragma once

// Exact Gaussian process regression with a linear prior mean and an ARD
// squared-exponential kernel, one independent emulator per scalar output.
//
// Internally inputs are standardized per dimension and outputs are centered
// and scaled to unit variance; hyperparameters live in those coordinates.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpenkf/observation_operator.hpp"

namespace gpenkf::gp {

struct Hyperparameters {
    double signal_variance = 1.0;   ///< sigma_f^2
    Eigen::VectorXd lengthscales;   ///< one per input dimension
    double noise_variance = 1e-8;   ///< sigma_n^2 (jitter)

    Eigen::Index dim() const noexcept { return lengthscales.size(); }
    void validate() const;

    /// [log sigma_f^2, log l_1..l_d, log sigma_n^2]
    Eigen::VectorXd to_log() const;
    static Hyperparameters from_log(const Eigen::Ref<const Eigen::VectorXd>& log_params);
};

struct Standardization {
    Eigen::VectorXd input_mean;
    Eigen::VectorXd input_scale;
    double output_mean = 0.0;
    double output_scale = 1.0;

    static Standardization identity(Eigen::Index dim);
    /// Per-column mean/sd of X (sd floored to 1 for constant columns), mean/sd of y.
    static Standardization from_data(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y);

    Eigen::MatrixXd inputs(const Eigen::Ref<const Eigen::MatrixXd>& X) const;  ///< rows are points
    Eigen::VectorXd outputs(const Eigen::Ref<const Eigen::VectorXd>& y) const;
};

/// Search box for hyperparameter fitting, in standardized units.
struct HyperparameterBounds {
    double lengthscale_lo = 1e-2;
    double lengthscale_hi = 1e2;
    double signal_lo = 1e-4;
    double signal_hi = 1e4;
    double noise_lo = 1e-10;
    double noise_hi = 1e-2;
};

struct FitOptions {
    int restarts = 10;
    std::uint64_t seed = 0;
    int max_iterations = 200;
    double gradient_tolerance = 1e-6;
    HyperparameterBounds bounds;
};

/// Squared-exponential ARD kernel matrix between the rows of A and B.
Eigen::MatrixXd rbf_kernel(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                           const Hyperparameters& hp);

/// Design matrix [1, X] of the linear prior mean.
Eigen::MatrixXd linear_basis(const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Gaussian log-density of y ~ N(F beta, K + sigma_n^2 I) for the given
/// coordinates. Throws SingularKernel if the covariance cannot be factorized.
double log_marginal_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                               const Hyperparameters& hp, const Eigen::Ref<const Eigen::VectorXd>& mean_coeffs);

struct ProfiledLikelihood {
    double value = 0.0;
    Eigen::VectorXd gradient;     ///< d value / d log-hyperparameters (see Hyperparameters::to_log)
    Eigen::VectorXd mean_coeffs;  ///< generalized least-squares estimate of beta
};

/// Log marginal likelihood with the mean coefficients profiled out by
/// generalized least squares, plus its gradient in log-hyperparameters.
/// Throws SingularKernel when the kernel matrix is not positive definite.
ProfiledLikelihood profiled_log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                           const Eigen::Ref<const Eigen::VectorXd>& y, const Hyperparameters& hp);

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

class EmulatorModel {
public:
    /// Maximum marginal likelihood fit with multi-start BFGS over the
    /// log-hyperparameter box. X is M x d (rows are points).
    static EmulatorModel fit(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                             const FitOptions& options = {});

    /// Conditions on (X, y) with fixed hyperparameters, mean coefficients and
    /// scaling. The noise variance is escalated x10 (up to 1e-2) if the
    /// kernel matrix cannot be factorized.
    static EmulatorModel condition(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   const Eigen::Ref<const Eigen::VectorXd>& y, const Hyperparameters& hp,
                                   const Eigen::Ref<const Eigen::VectorXd>& mean_coeffs, const Standardization& scaling);

    Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    /// Predictions at the columns of `thetas` (d x N).
    void predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::Ref<Eigen::VectorXd> means,
                       Eigen::Ref<Eigen::VectorXd> variances) const;

    /// Log-likelihood of the training data under the stored hyperparameters,
    /// in standardized output units.
    double log_marginal_likelihood() const;

    Eigen::Index input_dim() const noexcept { return X_.cols(); }
    Eigen::Index training_size() const noexcept { return X_.rows(); }
    const Eigen::MatrixXd& training_inputs() const noexcept { return X_; }
    const Eigen::VectorXd& training_targets() const noexcept { return y_; }
    const Hyperparameters& hyperparameters() const noexcept { return hp_; }
    const Eigen::VectorXd& mean_coeffs() const noexcept { return beta_; }
    const Standardization& scaling() const noexcept { return scaling_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// sigma_f^2 and sigma_n^2 in output units.
    double signal_variance() const noexcept;
    double noise_variance() const noexcept;

private:
    EmulatorModel() = default;
    void factorize();

    Eigen::MatrixXd X_;   // natural units
    Eigen::VectorXd y_;
    Standardization scaling_;
    Hyperparameters hp_;
    Eigen::VectorXd beta_;
    Eigen::MatrixXd Z_;   // standardized inputs
    Eigen::MatrixXd chol_;  // lower factor of K + sigma_n^2 I
    Eigen::VectorXd alpha_;
    std::vector<std::string> warnings_;
};

/// Log-likelihood of (X, y), given in natural units, under the model's
/// hyperparameters, mean coefficients and scaling.
double log_marginal_likelihood(const EmulatorModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                               const Eigen::Ref<const Eigen::VectorXd>& y);

/// Coefficient of determination of `predicted` against `actual`.
double r_squared(const Eigen::Ref<const Eigen::VectorXd>& actual, const Eigen::Ref<const Eigen::VectorXd>& predicted);

/// Independent emulators sharing one input space, one per output label.
class EmulatorBank final : public ObservationOperator {
public:
    EmulatorBank(std::vector<std::string> labels, std::vector<EmulatorModel> emulators);

    /// Fits one emulator per column of Y (M x p), optionally over `threads`
    /// workers; emulator j uses seed derive_seed(options.seed, j).
    static EmulatorBank fit(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& Y,
                            std::vector<std::string> labels, const FitOptions& options = {}, int threads = 1);

    Eigen::Index input_dim() const override;
    Eigen::Index output_dim() const override { return static_cast<Eigen::Index>(emulators_.size()); }

    /// Means and variances (p x N) at the columns of `thetas` (d x N).
    void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::MatrixXd& means,
                  Eigen::MatrixXd& variances) const override;

    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::vector<EmulatorModel>& emulators() const noexcept { return emulators_; }
    const EmulatorModel& operator[](std::size_t j) const { return emulators_.at(j); }

    /// Sub-bank with the emulators whose labels are listed, in that order.
    EmulatorBank select(const std::vector<std::string>& labels) const;

private:
    std::vector<std::string> labels_;
    std::vector<EmulatorModel> emulators_;
};

struct BankPrediction {
    Eigen::MatrixXd means;      ///< p x N
    Eigen::MatrixXd variances;  ///< p x N
};

BankPrediction predict_bank(const EmulatorBank& bank, const Eigen::Ref<const Eigen::MatrixXd>& thetas);

}  // namespace gpenkf::gp
