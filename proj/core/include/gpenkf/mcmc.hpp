#pragma once

// Adaptive random-walk Metropolis sampler used as the reference posterior.
//
// By default each sweep updates one coordinate at a time,
// theta'_j = theta_j + s_cj * proposal_scale_j * z, z ~ N(0, 1), and accepts or
// rejects it before moving on (ProposalKind::Joint moves all coordinates with
// one factor s_c instead). During burn-in every factor follows a Robbins-Monro
// recursion on its logarithm toward the target acceptance rate; afterwards it
// is frozen. One sweep counts as one sample.
//
// When the log-density is given as prior plus likelihood, the first
// anneal_fraction of burn-in targets prior + beta * likelihood with beta rising
// geometrically from anneal_start to 1, and the adaptation gain restarts when
// beta reaches 1. At 1/4, 2/4 and 3/4 of the remaining burn-in, a chain whose
// mean log-density over the preceding quarter falls below Q1 - 2 IQR of all
// chains is moved to the state and proposal scales of the best chain.
// Retained draws always target the full posterior. Chains
// advance in lockstep so that the log-density can be evaluated for all
// proposals in one batch, but each chain owns its random stream
// (derive_seed(seed, c)) and nothing is shared between them.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpenkf/calibration.hpp"
#include "gpenkf/gp.hpp"

namespace gpenkf {

enum class ProposalKind {
    Componentwise,  ///< one coordinate per proposal, each with its own adapted scale
    Joint,          ///< all coordinates at once, one adapted factor per chain
};

struct McmcConfig {
    int n_chains = 10;
    int n_samples = 40000;  ///< per chain, burn-in included
    int burn_in = 10000;
    int thin = 10;
    Eigen::VectorXd proposal_scale;  ///< empty: 10% of the prior standard deviations
    GaussianSummary prior;
    ParameterSpace space;            ///< truncation bounds of the prior
    std::uint64_t seed = 0;
    ProposalKind proposal = ProposalKind::Componentwise;
    bool adapt = true;
    double target_acceptance = 0.25;
    double anneal_fraction = 0.5;  ///< share of burn-in spent tempering; 0 disables
    double anneal_start = 1e-4;    ///< initial likelihood exponent
    bool reset_outliers = true;    ///< move stuck chains during burn-in (needs >= 4 chains)

    void validate() const;
    Eigen::VectorXd effective_proposal_scale() const;
    /// Number of retained draws per chain.
    int kept_per_chain() const noexcept { return (n_samples - burn_in) / thin; }
};

struct McmcResult {
    Eigen::MatrixXd samples;                    ///< pooled draws, one per row, chain-major
    std::vector<Eigen::MatrixXd> chains;        ///< retained draws of each chain, one per row
    Eigen::VectorXd acceptance_rates;           ///< post-burn-in, per chain
    Eigen::MatrixXd proposal_scales;            ///< adapted step sd, d x n_chains
    Eigen::VectorXd rhat;                       ///< per parameter
    Eigen::VectorXd ess;                        ///< effective sample size of the pooled draws, per parameter
    struct OutlierReset {
        int sweep;  ///< sweeps completed when the chain was moved
        int chain;
        int source;
    };
    std::vector<OutlierReset> outlier_resets;   ///< burn-in moves of stuck chains
    std::vector<std::string> warnings;

    GaussianSummary summary() const;
};

/// Log-density of a d x C batch of points (one per column). Must return -inf
/// for points outside the support.
using BatchLogDensity = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Unnormalized log-density of the Gaussian prior truncated to `space`.
double log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta, const GaussianSummary& prior,
                 const ParameterSpace& space);

/// Gaussian log-likelihood of obs.y with mean mean and covariance R + diag(variance).
double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& mean, const Eigen::Ref<const Eigen::VectorXd>& variance,
                      const ObservationSet& obs);

/// log prior + log-likelihood under the emulator bank, -inf outside the prior support.
double log_posterior(const Eigen::Ref<const Eigen::VectorXd>& theta, const gp::EmulatorBank& bank,
                     const ObservationSet& obs, const GaussianSummary& prior, const ParameterSpace& space);

/// Batched version over the columns of thetas.
Eigen::VectorXd log_posterior_batch(const Eigen::Ref<const Eigen::MatrixXd>& thetas, const ObservationOperator& op,
                                    const ObservationSet& obs, const GaussianSummary& prior,
                                    const ParameterSpace& space);

/// Potential scale reduction per parameter from equally long chains (rows are draws).
Eigen::VectorXd gelman_rubin(const std::vector<Eigen::MatrixXd>& chains);

/// Multi-chain effective sample size per parameter: total draws divided by
/// the integrated autocorrelation time, truncated with Geyer's initial
/// positive sequence.
Eigen::VectorXd effective_sample_size(const std::vector<Eigen::MatrixXd>& chains);

/// Samples an arbitrary log-density without tempering. Chains start from prior draws inside `space`.
McmcResult run_mcmc(const McmcConfig& cfg, const BatchLogDensity& log_density);

/// Samples log_prior + log_likelihood with annealed burn-in. The likelihood is
/// only evaluated where the prior is finite.
McmcResult run_mcmc(const McmcConfig& cfg, const BatchLogDensity& log_prior, const BatchLogDensity& log_likelihood);

McmcResult run_mcmc(const McmcConfig& cfg, const ObservationOperator& op, const ObservationSet& obs);

/// Checks that the bank's labels equal the observation labels.
McmcResult run_mcmc(const McmcConfig& cfg, const gp::EmulatorBank& bank, const ObservationSet& obs);

}  // namespace gpenkf
