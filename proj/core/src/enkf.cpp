#include "gpenkf/enkf.hpp"

#include <cmath>
#include <string>

#include "gpenkf/errors.hpp"
#include "gpenkf/parallel.hpp"

namespace gpenkf {

Eigen::VectorXd EnkfConfig::default_sigma_theta(const ParameterSpace& space) {
    Eigen::VectorXd s(space.dim());
    for (Eigen::Index i = 0; i < space.dim(); ++i) {
        const Bound& b = space.bound(i);
        s[i] = b.finite() ? 0.005 * b.width() : 0.0;
    }
    return s;
}

void EnkfConfig::validate() const {
    if (ensemble_size < 2) throw InvalidArgument("ensemble size must be >= 2");
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
    initial.validate();
    const Eigen::Index d = initial.dim();
    if (space.dim() != d) throw DimensionMismatch("parameter space and initial distribution differ in dimension");
    if (sigma_theta.size() != d) throw DimensionMismatch("sigma_theta must have one entry per parameter");
    if (!(sigma_theta.array() >= 0.0).all() || !sigma_theta.allFinite())
        throw InvalidArgument("sigma_theta must be finite and non-negative");
}

Eigen::VectorXd perturb_observation(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& R,
                                    double scale, Rng& rng) {
    if (R.rows() != y.size() || R.cols() != y.size()) throw DimensionMismatch("R must be p x p");
    if (!(scale >= 1.0)) throw InvalidArgument("perturbation scale must be >= 1");
    return y + std::sqrt(scale) * (covariance_factor(R) * rng.normal_vector(y.size()));
}

Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& P, const Eigen::Ref<const Eigen::MatrixXd>& H,
                            const Eigen::Ref<const Eigen::MatrixXd>& R, const Eigen::Ref<const Eigen::VectorXd>& gpe_var) {
    if (P.cols() != H.cols()) throw DimensionMismatch("P and H must have one column per member");
    const Eigen::Index p = H.rows();
    if (R.rows() != p || R.cols() != p || gpe_var.size() != p) throw DimensionMismatch("R and gpe_var must match H");
    Eigen::MatrixXd S = H * H.transpose() + R;
    S.diagonal() += gpe_var;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw SingularInnovation("innovation covariance is not positive definite");
    // G S = P H^T  <=>  S G^T = H P^T
    return llt.solve(H * P.transpose()).transpose();
}

EnkfResult run_enkf(const EnkfConfig& cfg, const ObservationOperator& op, const ObservationSet& obs) {
    cfg.validate();
    const Eigen::Index d = cfg.initial.dim();
    const Eigen::Index n_members = cfg.ensemble_size;
    const Eigen::Index p = obs.size();
    if (op.input_dim() != d) throw DimensionMismatch("operator input dimension does not match parameters");
    if (op.output_dim() != p) throw DimensionMismatch("operator output dimension does not match observations");

    const double scale = cfg.noise_scaling == NoiseScaling::PerIteration ? static_cast<double>(cfg.iterations) : 1.0;
    const Eigen::MatrixXd R = obs.noise_cov();
    const Eigen::MatrixXd scaled_R = scale * R;
    const Eigen::MatrixXd noise_factor = std::sqrt(scale) * covariance_factor(R);
    const bool dynamics = (cfg.sigma_theta.array() > 0.0).any();
    const double norm = 1.0 / std::sqrt(static_cast<double>(n_members - 1));

    Eigen::MatrixXd theta = sample_gaussian(cfg.initial, n_members, cfg.seed);

    EnkfResult result{Ensemble(cfg.space, theta, 0, cfg.seed), {}, {}, {}, {}, {}};
    Eigen::MatrixXd means, variances;
    for (int k = 0; k < cfg.iterations; ++k) {
        const auto stream = static_cast<std::uint64_t>(k) + 1;
        Eigen::MatrixXd targets(p, n_members);
        if (cfg.perturbation == Perturbation::Shared) {
            Rng obs_rng(derive_seed(cfg.seed, stream, 0));
            targets.colwise() = obs.y() + noise_factor * obs_rng.normal_vector(p);
        }
        for (Eigen::Index n = 0; n < n_members; ++n) {
            Rng rng(derive_seed(cfg.seed, stream, static_cast<std::uint64_t>(n) + 1));
            if (cfg.perturbation == Perturbation::PerMember)
                targets.col(n) = obs.y() + noise_factor * rng.normal_vector(p);
            if (dynamics) theta.col(n) += cfg.sigma_theta.cwiseProduct(rng.normal_vector(d));
        }

        op.evaluate(theta, means, variances);
        if (!means.allFinite() || !variances.allFinite())
            throw NonFiniteMember("measurement operator returned non-finite values at iteration " + std::to_string(k));

        const Eigen::MatrixXd P = (theta.colwise() - theta.rowwise().mean()) * norm;
        const Eigen::MatrixXd H = (means.colwise() - means.rowwise().mean()) * norm;
        const Eigen::MatrixXd HPt = H * P.transpose();  // p x d
        const Eigen::MatrixXd base = H * H.transpose() + scaled_R;
        const Eigen::MatrixXd innovations = targets - means;

        const bool shared = (variances.array() == 0.0).all();
        Eigen::LLT<Eigen::MatrixXd> shared_llt;
        if (shared) {
            shared_llt.compute(base);
            if (shared_llt.info() != Eigen::Success)
                throw SingularInnovation("innovation covariance is not positive definite at iteration " +
                                         std::to_string(k));
        }

        Eigen::MatrixXd updated(d, n_members);
        parallel_for(static_cast<std::size_t>(n_members), cfg.threads, [&](std::size_t idx) {
            const auto n = static_cast<Eigen::Index>(idx);
            Eigen::VectorXd w;
            if (shared) {
                w = shared_llt.solve(innovations.col(n));
            } else {
                Eigen::MatrixXd S = base;
                S.diagonal() += scale * variances.col(n);
                Eigen::LLT<Eigen::MatrixXd> llt(S);
                if (llt.info() != Eigen::Success)
                    throw SingularInnovation("innovation covariance of member " + std::to_string(n) +
                                             " is not positive definite");
                w = llt.solve(innovations.col(n));
            }
            updated.col(n) = theta.col(n) + HPt.transpose() * w;
        });
        if (!updated.allFinite())
            throw NonFiniteMember("ensemble member became non-finite at iteration " + std::to_string(k));
        theta = std::move(updated);

        result.clamp_counts.push_back(clamp_columns(cfg.space, theta));
        result.innovations.push_back(innovations.rowwise().mean());
        if (cfg.record_trajectory) result.trajectory.push_back(ensemble_mean_cov(theta));
        if (cfg.record_snapshots) result.snapshots.push_back(theta);
    }

    result.posterior = ensemble_mean_cov(theta);
    result.final_ensemble = Ensemble(cfg.space, std::move(theta), static_cast<std::size_t>(cfg.iterations), cfg.seed);
    return result;
}

EnkfResult run_enkf(const EnkfConfig& cfg, const gp::EmulatorBank& bank, const ObservationSet& obs) {
    if (bank.labels() != obs.labels()) throw DimensionMismatch("emulator bank labels do not match observation labels");
    return run_enkf(cfg, static_cast<const ObservationOperator&>(bank), obs);
}

}  // namespace gpenkf
