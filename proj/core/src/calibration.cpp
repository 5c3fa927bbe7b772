#include "gpenkf/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gpenkf/errors.hpp"
#include "gpenkf/random.hpp"

namespace gpenkf {

bool Bound::finite() const noexcept { return std::isfinite(lo) && std::isfinite(hi); }

ParameterSpace::ParameterSpace(std::vector<std::string> names, std::vector<Bound> bounds)
    : names_(std::move(names)), bounds_(std::move(bounds)) {
    if (names_.empty()) throw InvalidArgument("parameter space needs at least one dimension");
    if (names_.size() != bounds_.size()) throw DimensionMismatch("names and bounds differ in length");
    if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size())
        throw InvalidArgument("parameter names must be unique");
    for (std::size_t i = 0; i < bounds_.size(); ++i) {
        if (!(bounds_[i].lo < bounds_[i].hi))
            throw InvalidArgument("bound for '" + names_[i] + "' must satisfy lo < hi");
    }
}

ParameterSpace ParameterSpace::unbounded(Eigen::Index dim) {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < dim; ++i) names.push_back("p" + std::to_string(i));
    return {std::move(names), std::vector<Bound>(static_cast<std::size_t>(dim))};
}

ParameterSpace ParameterSpace::mms() {
    return {{"tau_in", "tau_out", "tau_open", "tau_close", "D"},
            {{0.01, 0.3}, {1.0, 30.0}, {65.0, 215.0}, {100.0, 150.0}, {0.1, 5.0}}};
}

ParameterSpace ParameterSpace::toy() { return {{"theta1", "theta2"}, {{-5.0, 5.0}, {-5.0, 5.0}}}; }

Eigen::VectorXd ParameterSpace::lower() const {
    Eigen::VectorXd v(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) v[i] = bound(i).lo;
    return v;
}

Eigen::VectorXd ParameterSpace::upper() const {
    Eigen::VectorXd v(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) v[i] = bound(i).hi;
    return v;
}

Eigen::VectorXd ParameterSpace::midpoint() const {
    Eigen::VectorXd v(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const Bound& b = bound(i);
        v[i] = b.finite() ? 0.5 * (b.lo + b.hi) : (std::isfinite(b.lo) ? b.lo : (std::isfinite(b.hi) ? b.hi : 0.0));
    }
    return v;
}

bool ParameterSpace::contains(const Eigen::Ref<const Eigen::VectorXd>& values) const {
    if (values.size() != dim()) return false;
    for (Eigen::Index i = 0; i < dim(); ++i) {
        if (!(values[i] >= bound(i).lo && values[i] <= bound(i).hi)) return false;
    }
    return true;
}

ParameterVector::ParameterVector(ParameterSpace space, Eigen::VectorXd values)
    : space_(std::move(space)), values_(std::move(values)) {
    if (values_.size() != space_.dim())
        throw DimensionMismatch("parameter vector has " + std::to_string(values_.size()) + " values for a " +
                                std::to_string(space_.dim()) + "-dimensional space");
}

ClampResult clamp_to_bounds(const ParameterVector& theta) {
    Eigen::VectorXd v = theta.values();
    bool clamped = false;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const Bound& b = theta.space().bound(i);
        const double c = std::clamp(v[i], b.lo, b.hi);
        if (c != v[i]) {
            clamped = true;
            v[i] = c;
        }
    }
    return {ParameterVector(theta.space(), std::move(v)), clamped};
}

std::size_t clamp_columns(const ParameterSpace& space, Eigen::Ref<Eigen::MatrixXd> members) {
    if (members.rows() != space.dim()) throw DimensionMismatch("member dimension does not match parameter space");
    std::size_t count = 0;
    for (Eigen::Index n = 0; n < members.cols(); ++n) {
        bool moved = false;
        for (Eigen::Index i = 0; i < members.rows(); ++i) {
            const Bound& b = space.bound(i);
            const double c = std::clamp(members(i, n), b.lo, b.hi);
            if (c != members(i, n)) {
                members(i, n) = c;
                moved = true;
            }
        }
        count += moved ? 1 : 0;
    }
    return count;
}

void GaussianSummary::validate() const {
    const Eigen::Index d = mean.size();
    if (d < 1) throw InvalidArgument("Gaussian summary needs a non-empty mean");
    if (covariance.rows() != d || covariance.cols() != d) throw DimensionMismatch("covariance must be d x d");
    const double scale = std::max(covariance.cwiseAbs().maxCoeff(), 1e-300);
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InvalidArgument("covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
    const double largest = eig.eigenvalues().maxCoeff();
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(largest, 0.0))
        throw InvalidArgument("covariance is not positive semidefinite");
}

Ensemble::Ensemble(ParameterSpace space, Eigen::MatrixXd members, std::size_t iteration, std::uint64_t rng_seed)
    : space_(std::move(space)), members_(std::move(members)), iteration_(iteration), rng_seed_(rng_seed) {
    if (members_.rows() != space_.dim()) throw DimensionMismatch("ensemble rows must equal the space dimension");
    if (members_.cols() < 2) throw InvalidArgument("ensemble needs at least two members");
}

Ensemble Ensemble::from_members(const std::vector<ParameterVector>& members, std::size_t iteration,
                                std::uint64_t rng_seed) {
    if (members.empty()) throw InvalidArgument("ensemble needs at least two members");
    const Eigen::Index d = members.front().dim();
    Eigen::MatrixXd m(d, static_cast<Eigen::Index>(members.size()));
    for (std::size_t n = 0; n < members.size(); ++n) {
        if (members[n].dim() != d) throw DimensionMismatch("ensemble members have differing dimensions");
        m.col(static_cast<Eigen::Index>(n)) = members[n].values();
    }
    return {members.front().space(), std::move(m), iteration, rng_seed};
}

GaussianSummary ensemble_mean_cov(const Ensemble& e) { return ensemble_mean_cov(e.members()); }

GaussianSummary ensemble_mean_cov(const Eigen::Ref<const Eigen::MatrixXd>& members) {
    const Eigen::Index n = members.cols();
    if (n < 2) throw InvalidArgument("sample covariance needs at least two members");
    GaussianSummary s;
    s.mean = members.rowwise().mean();
    const Eigen::MatrixXd centered = members.colwise() - s.mean;
    s.covariance = centered * centered.transpose() / static_cast<double>(n - 1);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
    return s;
}

Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd sample_gaussian(const GaussianSummary& dist, Eigen::Index count, std::uint64_t seed) {
    dist.validate();
    const Eigen::MatrixXd factor = covariance_factor(dist.covariance);
    Eigen::MatrixXd out(dist.dim(), count);
    for (Eigen::Index n = 0; n < count; ++n) {
        Rng rng(derive_seed(seed, 0, static_cast<std::uint64_t>(n)));
        out.col(n) = dist.mean + factor * rng.normal_vector(dist.dim());
    }
    return out;
}

ObservationSet::ObservationSet(Eigen::VectorXd y, Eigen::MatrixXd noise_cov, std::vector<std::string> labels)
    : y_(std::move(y)), noise_cov_(std::move(noise_cov)), labels_(std::move(labels)) {
    const Eigen::Index p = y_.size();
    if (p < 1) throw InvalidArgument("observation set needs at least one measurement");
    if (noise_cov_.rows() != p || noise_cov_.cols() != p) throw DimensionMismatch("noise covariance must be p x p");
    if (static_cast<Eigen::Index>(labels_.size()) != p) throw DimensionMismatch("one label per measurement required");
    const double scale = std::max(noise_cov_.cwiseAbs().maxCoeff(), 1e-300);
    if ((noise_cov_ - noise_cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InvalidArgument("noise covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(noise_cov_, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() >= -1e-12 * scale))
        throw InvalidArgument("noise covariance is not positive semidefinite");
}

}  // namespace gpenkf
