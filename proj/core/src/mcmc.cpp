#include "gpenkf/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gpenkf/errors.hpp"
#include "gpenkf/random.hpp"

namespace gpenkf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::LLT<Eigen::MatrixXd> prior_factor(const GaussianSummary& prior) {
    Eigen::LLT<Eigen::MatrixXd> llt(prior.covariance);
    if (llt.info() != Eigen::Success) throw InvalidArgument("prior covariance must be positive definite");
    return llt;
}

double log_prior_with(const Eigen::Ref<const Eigen::VectorXd>& theta, const GaussianSummary& prior,
                      const Eigen::LLT<Eigen::MatrixXd>& llt, const ParameterSpace& space) {
    if (!theta.allFinite() || !space.contains(theta)) return kNegInf;
    const Eigen::VectorXd z = llt.matrixL().solve(theta - prior.mean);
    return -0.5 * z.squaredNorm();
}

// Chains whose window-mean log-density lies below Q1 - 2 IQR of all chains.
std::vector<int> outlier_chains(const Eigen::VectorXd& window_mean) {
    std::vector<double> sorted(window_mean.data(), window_mean.data() + window_mean.size());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    const double q1 = quantile(0.25), q3 = quantile(0.75);
    const double cut = q1 - 2.0 * (q3 - q1);
    std::vector<int> out;
    for (Eigen::Index c = 0; c < window_mean.size(); ++c)
        if (!(window_mean[c] >= cut)) out.push_back(static_cast<int>(c));
    return out;
}

Eigen::VectorXd initial_state(const McmcConfig& cfg, const Eigen::MatrixXd& factor, Rng& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Eigen::VectorXd theta = cfg.prior.mean + factor * rng.normal_vector(cfg.prior.dim());
        if (cfg.space.contains(theta)) return theta;
    }
    return clamp_to_bounds(ParameterVector(cfg.space, cfg.prior.mean)).value.values();
}

}  // namespace

void McmcConfig::validate() const {
    if (n_chains < 1) throw InvalidArgument("n_chains must be >= 1");
    if (burn_in < 0 || burn_in >= n_samples) throw InvalidArgument("burn_in must satisfy 0 <= burn_in < n_samples");
    if (thin < 1) throw InvalidArgument("thin must be >= 1");
    if (kept_per_chain() < 1) throw InvalidArgument("no draws retained after burn-in and thinning");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
        throw InvalidArgument("target_acceptance must lie in (0, 1)");
    if (!(anneal_fraction >= 0.0 && anneal_fraction <= 1.0)) throw InvalidArgument("anneal_fraction must lie in [0, 1]");
    if (!(anneal_start > 0.0 && anneal_start <= 1.0)) throw InvalidArgument("anneal_start must lie in (0, 1]");
    prior.validate();
    if (space.dim() != prior.dim()) throw DimensionMismatch("parameter space and prior differ in dimension");
    if (proposal_scale.size() != 0) {
        if (proposal_scale.size() != prior.dim()) throw DimensionMismatch("proposal_scale must have one entry per parameter");
        if (!proposal_scale.allFinite() || !(proposal_scale.array() >= 0.0).all())
            throw InvalidArgument("proposal_scale must be finite and non-negative");
    }
}

Eigen::VectorXd McmcConfig::effective_proposal_scale() const {
    if (proposal_scale.size() != 0) return proposal_scale;
    return 0.1 * prior.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

GaussianSummary McmcResult::summary() const { return ensemble_mean_cov(Eigen::MatrixXd(samples.transpose())); }

double log_prior(const Eigen::Ref<const Eigen::VectorXd>& theta, const GaussianSummary& prior,
                 const ParameterSpace& space) {
    if (theta.size() != prior.dim() || space.dim() != prior.dim())
        throw DimensionMismatch("theta, prior and space must share one dimension");
    return log_prior_with(theta, prior, prior_factor(prior), space);
}

double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& mean, const Eigen::Ref<const Eigen::VectorXd>& variance,
                      const ObservationSet& obs) {
    const Eigen::Index p = obs.size();
    if (mean.size() != p || variance.size() != p) throw DimensionMismatch("prediction length must match observations");
    Eigen::MatrixXd S = obs.noise_cov();
    S.diagonal() += variance;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) return kNegInf;
    const Eigen::VectorXd z = llt.matrixL().solve(obs.y() - mean);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (z.squaredNorm() + log_det + static_cast<double>(p) * std::log(2.0 * std::numbers::pi));
}

Eigen::VectorXd log_posterior_batch(const Eigen::Ref<const Eigen::MatrixXd>& thetas, const ObservationOperator& op,
                                    const ObservationSet& obs, const GaussianSummary& prior,
                                    const ParameterSpace& space) {
    if (thetas.rows() != prior.dim() || op.input_dim() != prior.dim() || space.dim() != prior.dim())
        throw DimensionMismatch("theta, operator, prior and space must share one dimension");
    if (op.output_dim() != obs.size()) throw DimensionMismatch("operator output dimension does not match observations");
    const auto llt = prior_factor(prior);
    const Eigen::Index count = thetas.cols();
    Eigen::VectorXd out(count);
    std::vector<Eigen::Index> inside;
    for (Eigen::Index c = 0; c < count; ++c) {
        out[c] = log_prior_with(thetas.col(c), prior, llt, space);
        if (std::isfinite(out[c])) inside.push_back(c);
    }
    if (inside.empty()) return out;
    Eigen::MatrixXd points(thetas.rows(), static_cast<Eigen::Index>(inside.size()));
    for (std::size_t i = 0; i < inside.size(); ++i) points.col(static_cast<Eigen::Index>(i)) = thetas.col(inside[i]);
    Eigen::MatrixXd means, variances;
    op.evaluate(points, means, variances);
    for (std::size_t i = 0; i < inside.size(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        if (!means.col(col).allFinite() || !variances.col(col).allFinite()) {
            out[inside[i]] = kNegInf;
            continue;
        }
        out[inside[i]] += log_likelihood(means.col(col), variances.col(col), obs);
    }
    return out;
}

double log_posterior(const Eigen::Ref<const Eigen::VectorXd>& theta, const gp::EmulatorBank& bank,
                     const ObservationSet& obs, const GaussianSummary& prior, const ParameterSpace& space) {
    return log_posterior_batch(theta, bank, obs, prior, space)[0];
}

Eigen::VectorXd gelman_rubin(const std::vector<Eigen::MatrixXd>& chains) {
    if (chains.empty()) throw InvalidArgument("gelman_rubin needs at least one chain");
    const Eigen::Index n = chains.front().rows();
    const Eigen::Index d = chains.front().cols();
    for (const auto& c : chains)
        if (c.rows() != n || c.cols() != d) throw DimensionMismatch("chains must have equal shape");
    const auto m = static_cast<double>(chains.size());
    if (chains.size() < 2 || n < 2) return Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());

    Eigen::MatrixXd chain_means(static_cast<Eigen::Index>(chains.size()), d);
    Eigen::VectorXd within = Eigen::VectorXd::Zero(d);
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const Eigen::RowVectorXd mu = chains[c].colwise().mean();
        chain_means.row(static_cast<Eigen::Index>(c)) = mu;
        within += ((chains[c].rowwise() - mu).array().square().colwise().sum() / static_cast<double>(n - 1)).matrix().transpose();
    }
    within /= m;
    const Eigen::RowVectorXd grand = chain_means.colwise().mean();
    const Eigen::VectorXd between =
        (static_cast<double>(n) / (m - 1.0)) *
        (chain_means.rowwise() - grand).array().square().colwise().sum().matrix().transpose();
    const double nn = static_cast<double>(n);
    const Eigen::VectorXd var_plus = ((nn - 1.0) / nn) * within + between / nn;
    Eigen::VectorXd rhat(d);
    for (Eigen::Index j = 0; j < d; ++j)
        rhat[j] = within[j] > 0.0 ? std::sqrt(var_plus[j] / within[j]) : std::numeric_limits<double>::quiet_NaN();
    return rhat;
}

Eigen::VectorXd effective_sample_size(const std::vector<Eigen::MatrixXd>& chains) {
    if (chains.empty()) throw InvalidArgument("effective_sample_size needs at least one chain");
    const Eigen::Index n = chains.front().rows();
    const Eigen::Index d = chains.front().cols();
    for (const auto& c : chains)
        if (c.rows() != n || c.cols() != d) throw DimensionMismatch("chains must have equal shape");
    const auto m = static_cast<double>(chains.size());
    const double total = m * static_cast<double>(n);
    Eigen::VectorXd ess = Eigen::VectorXd::Constant(d, total);
    if (n < 4) return ess;

    const double nn = static_cast<double>(n);
    for (Eigen::Index j = 0; j < d; ++j) {
        std::vector<Eigen::VectorXd> centered;
        double within = 0.0;
        Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
        for (std::size_t c = 0; c < chains.size(); ++c) {
            const double mu = chains[c].col(j).mean();
            means[static_cast<Eigen::Index>(c)] = mu;
            centered.push_back(chains[c].col(j).array() - mu);
            within += centered.back().squaredNorm() / (nn - 1.0);
        }
        within /= m;
        const double between = chains.size() > 1 ? nn * (means.array() - means.mean()).square().sum() / (m - 1.0) : 0.0;
        const double var_plus = (nn - 1.0) / nn * within + between / nn;
        if (!(var_plus > 0.0)) continue;

        // rho_t = 1 - (W - mean_c gamma_c(t)) / var_plus with biased per-chain autocovariances.
        auto rho = [&](Eigen::Index t) {
            double acov = 0.0;
            for (const auto& x : centered) acov += x.head(n - t).dot(x.tail(n - t)) / nn;
            acov /= m;
            return 1.0 - (within - acov) / var_plus;
        };
        double tau = -1.0;
        double previous_pair = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t + 1 < n; t += 2) {
            double pair = rho(t) + rho(t + 1);
            if (pair < 0.0) break;
            pair = std::min(pair, previous_pair);
            previous_pair = pair;
            tau += 2.0 * pair;
        }
        ess[j] = total / std::max(tau, 1.0 / std::log10(total));
    }
    return ess;
}

namespace {

// log_density = base + beta * tempered; tempered is only evaluated where base is finite.
McmcResult sample(const McmcConfig& cfg, const BatchLogDensity& base_density, const BatchLogDensity* tempered_density) {
    cfg.validate();
    const Eigen::Index d = cfg.prior.dim();
    const int C = cfg.n_chains;
    const Eigen::VectorXd step = cfg.effective_proposal_scale();
    const Eigen::MatrixXd factor = covariance_factor(cfg.prior.covariance);

    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(C));
    Eigen::MatrixXd state(d, C);
    for (int c = 0; c < C; ++c) {
        rngs.emplace_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(c)));
        state.col(c) = initial_state(cfg, factor, rngs.back());
    }
    auto evaluate = [&](const Eigen::MatrixXd& thetas, Eigen::VectorXd& base, Eigen::VectorXd& tempered) {
        base = base_density(thetas);
        if (base.size() != thetas.cols()) throw DimensionMismatch("log-density must return one value per column");
        tempered = Eigen::VectorXd::Zero(thetas.cols());
        if (!tempered_density) return;
        std::vector<Eigen::Index> inside;
        for (Eigen::Index c = 0; c < thetas.cols(); ++c)
            if (std::isfinite(base[c])) inside.push_back(c);
        if (inside.empty()) return;
        Eigen::MatrixXd sub(thetas.rows(), static_cast<Eigen::Index>(inside.size()));
        for (std::size_t k = 0; k < inside.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = thetas.col(inside[k]);
        const Eigen::VectorXd values = (*tempered_density)(sub);
        if (values.size() != sub.cols()) throw DimensionMismatch("log-likelihood must return one value per column");
        for (std::size_t k = 0; k < inside.size(); ++k) tempered[inside[k]] = values[static_cast<Eigen::Index>(k)];
    };
    Eigen::VectorXd base, tempered, proposed_base, proposed_tempered;
    evaluate(state, base, tempered);
    const int anneal_steps =
        tempered_density ? static_cast<int>(std::floor(cfg.anneal_fraction * static_cast<double>(cfg.burn_in))) : 0;

    McmcResult result;
    const int kept = cfg.kept_per_chain();
    result.chains.assign(static_cast<std::size_t>(C), Eigen::MatrixXd(kept, d));
    const bool joint = cfg.proposal == ProposalKind::Joint;
    const Eigen::Index blocks = joint ? 1 : d;
    Eigen::MatrixXd log_factor = Eigen::MatrixXd::Zero(blocks, C);
    Eigen::VectorXi accepted = Eigen::VectorXi::Zero(C);
    Eigen::MatrixXd proposal(d, C);
    // Outlier checks at 1/4, 2/4 and 3/4 of the untempered part of burn-in.
    const int reset_window = cfg.reset_outliers && C >= 4 ? (cfg.burn_in - anneal_steps) / 4 : 0;
    Eigen::VectorXd window_sum = Eigen::VectorXd::Zero(C);

    for (int t = 0; t < cfg.n_samples; ++t) {
        const bool burning = t < cfg.burn_in;
        const bool annealing = t < anneal_steps;
        const double beta = annealing ? std::pow(cfg.anneal_start, 1.0 - static_cast<double>(t) / anneal_steps) : 1.0;
        const int clock = annealing ? t : t - anneal_steps;
        const double gain = std::pow(static_cast<double>(clock) + 1.0, -0.6);
        for (Eigen::Index b = 0; b < blocks; ++b) {
            proposal = state;
            for (int c = 0; c < C; ++c) {
                Rng& rng = rngs[static_cast<std::size_t>(c)];
                const double f = std::exp(log_factor(b, c));
                if (joint)
                    proposal.col(c) += f * step.cwiseProduct(rng.normal_vector(d));
                else
                    proposal(b, c) += f * step[b] * rng.normal();
            }
            evaluate(proposal, proposed_base, proposed_tempered);
            for (int c = 0; c < C; ++c) {
                const double current = base[c] + beta * tempered[c];
                const double candidate = proposed_base[c] + beta * proposed_tempered[c];
                double alpha = 0.0;
                if (std::isfinite(candidate))
                    alpha = std::isfinite(current) ? std::min(1.0, std::exp(candidate - current)) : 1.0;
                if (rngs[static_cast<std::size_t>(c)].uniform() < alpha) {
                    state.col(c) = proposal.col(c);
                    base[c] = proposed_base[c];
                    tempered[c] = proposed_tempered[c];
                    if (!burning) ++accepted[c];
                }
                if (burning && cfg.adapt) log_factor(b, c) += gain * (alpha - cfg.target_acceptance);
            }
        }
        if (reset_window > 0 && burning && !annealing) {
            window_sum += base + tempered;
            const int since = t - anneal_steps + 1;
            if (since % reset_window == 0 && since < 4 * reset_window) {
                Eigen::Index best = 0;
                window_sum.maxCoeff(&best);
                for (int c : outlier_chains(window_sum / reset_window)) {
                    state.col(c) = state.col(best);
                    base[c] = base[best];
                    tempered[c] = tempered[best];
                    log_factor.col(c) = log_factor.col(best);
                    result.outlier_resets.push_back({t + 1, c, static_cast<int>(best)});
                }
                window_sum.setZero();
            }
        }
        if (!burning && (t - cfg.burn_in + 1) % cfg.thin == 0) {
            const int row = (t - cfg.burn_in + 1) / cfg.thin - 1;
            if (row < kept)
                for (int c = 0; c < C; ++c) result.chains[static_cast<std::size_t>(c)].row(row) = state.col(c).transpose();
        }
    }

    const double post_steps = static_cast<double>(cfg.n_samples - cfg.burn_in) * static_cast<double>(blocks);
    result.acceptance_rates = accepted.cast<double>() / post_steps;
    result.proposal_scales.resize(d, C);
    for (int c = 0; c < C; ++c)
        for (Eigen::Index j = 0; j < d; ++j)
            result.proposal_scales(j, c) = step[j] * std::exp(log_factor(joint ? 0 : j, c));
    result.samples.resize(static_cast<Eigen::Index>(C) * kept, d);
    for (int c = 0; c < C; ++c) {
        result.samples.middleRows(static_cast<Eigen::Index>(c) * kept, kept) = result.chains[static_cast<std::size_t>(c)];
        if (result.acceptance_rates[c] < 0.01)
            result.warnings.push_back("ZeroAcceptance: chain " + std::to_string(c) + " accepted " +
                                      std::to_string(result.acceptance_rates[c]) + " of proposals");
    }
    result.rhat = gelman_rubin(result.chains);
    result.ess = effective_sample_size(result.chains);
    return result;
}

}  // namespace

McmcResult run_mcmc(const McmcConfig& cfg, const BatchLogDensity& log_density) {
    return sample(cfg, log_density, nullptr);
}

McmcResult run_mcmc(const McmcConfig& cfg, const BatchLogDensity& log_prior, const BatchLogDensity& log_likelihood) {
    return sample(cfg, log_prior, &log_likelihood);
}

McmcResult run_mcmc(const McmcConfig& cfg, const ObservationOperator& op, const ObservationSet& obs) {
    cfg.validate();
    if (op.input_dim() != cfg.prior.dim()) throw DimensionMismatch("operator input dimension does not match the prior");
    if (op.output_dim() != obs.size()) throw DimensionMismatch("operator output dimension does not match observations");
    const auto llt = prior_factor(cfg.prior);
    const BatchLogDensity prior_term = [&](const Eigen::MatrixXd& thetas) {
        Eigen::VectorXd out(thetas.cols());
        for (Eigen::Index c = 0; c < thetas.cols(); ++c) out[c] = log_prior_with(thetas.col(c), cfg.prior, llt, cfg.space);
        return out;
    };
    const BatchLogDensity likelihood_term = [&](const Eigen::MatrixXd& thetas) {
        Eigen::MatrixXd means, variances;
        op.evaluate(thetas, means, variances);
        Eigen::VectorXd out(thetas.cols());
        for (Eigen::Index c = 0; c < thetas.cols(); ++c)
            out[c] = means.col(c).allFinite() && variances.col(c).allFinite()
                         ? log_likelihood(means.col(c), variances.col(c), obs)
                         : kNegInf;
        return out;
    };
    return run_mcmc(cfg, prior_term, likelihood_term);
}

McmcResult run_mcmc(const McmcConfig& cfg, const gp::EmulatorBank& bank, const ObservationSet& obs) {
    if (bank.labels() != obs.labels()) throw DimensionMismatch("emulator bank labels do not match observation labels");
    return run_mcmc(cfg, static_cast<const ObservationOperator&>(bank), obs);
}

}  // namespace gpenkf
