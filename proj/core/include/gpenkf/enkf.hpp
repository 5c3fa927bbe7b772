#pragma once

// Ensemble Kalman filter for static calibration with a stochastic (emulator)
// measurement operator.
//
// Each of the K iterations:
//   1. Y_k^n = y + eps_n,          eps_n ~ N(0, s R)
//   2. theta~_n = theta_n + sigma_theta .* xi_n,   xi_n ~ N(0, I)
//   3. P = (theta~ - <theta~>) / sqrt(N-1),  H = (m(theta~) - <m(theta~)>) / sqrt(N-1)
//   4. G_n = P H^T (H H^T + s (R + diag k(theta~_n)))^-1
//   5. theta_n = theta~_n + G_n (Y_k^n - m(theta~_n)), then clamped to bounds
// where s = K (noise_scaling = PerIteration) or 1 (Unscaled).
//
// With Perturbation::Shared a single eps is drawn per iteration for all
// members. The perturbation then cancels out of the anomalies and the
// ensemble contracts twice as fast as the exact posterior, so PerMember is
// the default.
//
// Random streams: the initial draw of member n uses derive_seed(seed, 0, n).
// In iteration k member n draws from derive_seed(seed, k+1, n+1): first its p
// observation-noise variates, then its d pseudo-dynamics variates. The shared
// perturbation uses derive_seed(seed, k+1, 0). Results do not depend on the
// number of worker threads.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gpenkf/calibration.hpp"
#include "gpenkf/gp.hpp"
#include "gpenkf/observation_operator.hpp"
#include "gpenkf/random.hpp"

namespace gpenkf {

enum class NoiseScaling {
    PerIteration,  ///< noise covariance multiplied by K in perturbation and gain
    Unscaled,      ///< R used as is; over-counts the data K times
};

enum class Perturbation {
    PerMember,  ///< independent eps_n for each member
    Shared,     ///< one eps per iteration, common to all members
};

struct EnkfConfig {
    Eigen::Index ensemble_size = 500;
    int iterations = 50;
    Eigen::VectorXd sigma_theta;  ///< per-parameter pseudo-dynamics intensity, parameter units per step
    GaussianSummary initial;
    ParameterSpace space;         ///< names and clamping bounds
    std::uint64_t seed = 0;
    bool record_trajectory = false;
    bool record_snapshots = false;  ///< keep the member matrix after every iteration
    NoiseScaling noise_scaling = NoiseScaling::PerIteration;
    Perturbation perturbation = Perturbation::PerMember;
    int threads = 1;

    /// 0.5% of each finite bound width; zero for unbounded components.
    static Eigen::VectorXd default_sigma_theta(const ParameterSpace& space);

    void validate() const;
};

struct EnkfResult {
    Ensemble final_ensemble;
    GaussianSummary posterior;
    std::vector<GaussianSummary> trajectory;      ///< after each iteration, if recorded
    std::vector<Eigen::MatrixXd> snapshots;       ///< member matrices, if recorded
    std::vector<std::size_t> clamp_counts;        ///< members clamped per iteration
    std::vector<Eigen::VectorXd> innovations;     ///< ensemble-mean innovation per iteration
};

/// y + eps with eps ~ N(0, scale * R).
Eigen::VectorXd perturb_observation(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& R,
                                    double scale, Rng& rng);

/// P H^T (H H^T + R + diag(gpe_var))^-1 through a Cholesky solve.
/// Throws SingularInnovation if the bracket is not positive definite.
Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& P, const Eigen::Ref<const Eigen::MatrixXd>& H,
                            const Eigen::Ref<const Eigen::MatrixXd>& R, const Eigen::Ref<const Eigen::VectorXd>& gpe_var);

EnkfResult run_enkf(const EnkfConfig& cfg, const ObservationOperator& op, const ObservationSet& obs);

/// Checks that the bank's labels equal the observation labels.
EnkfResult run_enkf(const EnkfConfig& cfg, const gp::EmulatorBank& bank, const ObservationSet& obs);

}  // namespace gpenkf
