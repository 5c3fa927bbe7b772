#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gpenkf {

struct Bound {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool finite() const noexcept;
    double width() const noexcept { return hi - lo; }

    friend bool operator==(const Bound&, const Bound&) = default;
};

/// Names and box bounds of a calibration space. Infinite bounds are allowed
/// for unconstrained problems.
class ParameterSpace {
public:
    ParameterSpace() = default;
    ParameterSpace(std::vector<std::string> names, std::vector<Bound> bounds);

    /// Unbounded space with names p0, p1, ...
    static ParameterSpace unbounded(Eigen::Index dim);

    /// (tau_in, tau_out, tau_open, tau_close, D) with the tabulated LHS ranges.
    static ParameterSpace mms();

    /// (theta1, theta2) on [-5, 5]^2.
    static ParameterSpace toy();

    Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(names_.size()); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<Bound>& bounds() const noexcept { return bounds_; }
    const Bound& bound(Eigen::Index i) const { return bounds_.at(static_cast<std::size_t>(i)); }

    Eigen::VectorXd lower() const;
    Eigen::VectorXd upper() const;
    Eigen::VectorXd midpoint() const;

    bool contains(const Eigen::Ref<const Eigen::VectorXd>& values) const;

    friend bool operator==(const ParameterSpace&, const ParameterSpace&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Bound> bounds_;
};

/// A point in a ParameterSpace.
class ParameterVector {
public:
    ParameterVector(ParameterSpace space, Eigen::VectorXd values);

    const ParameterSpace& space() const noexcept { return space_; }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    Eigen::Index dim() const noexcept { return values_.size(); }
    double operator[](Eigen::Index i) const { return values_[i]; }

private:
    ParameterSpace space_;
    Eigen::VectorXd values_;
};

struct ClampResult {
    ParameterVector value;
    bool clamped = false;
};

/// Projects every component into its [lo, hi] bound.
ClampResult clamp_to_bounds(const ParameterVector& theta);

/// In-place projection of the columns of `members`; returns how many columns
/// had at least one component moved.
std::size_t clamp_columns(const ParameterSpace& space, Eigen::Ref<Eigen::MatrixXd> members);

struct GaussianSummary {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;

    Eigen::Index dim() const noexcept { return mean.size(); }

    /// Throws InvalidArgument unless the covariance is square, symmetric and
    /// positive semidefinite within the tolerances documented in the README.
    void validate() const;
};

/// Monte Carlo representation of a distribution: one member per column.
class Ensemble {
public:
    Ensemble(ParameterSpace space, Eigen::MatrixXd members, std::size_t iteration = 0, std::uint64_t rng_seed = 0);

    /// Throws DimensionMismatch if the vectors do not share one space dimension.
    static Ensemble from_members(const std::vector<ParameterVector>& members, std::size_t iteration = 0,
                                 std::uint64_t rng_seed = 0);

    const ParameterSpace& space() const noexcept { return space_; }
    const Eigen::MatrixXd& members() const noexcept { return members_; }
    Eigen::Index size() const noexcept { return members_.cols(); }
    Eigen::Index dim() const noexcept { return members_.rows(); }
    ParameterVector member(Eigen::Index n) const { return {space_, members_.col(n)}; }
    std::size_t iteration() const noexcept { return iteration_; }
    std::uint64_t rng_seed() const noexcept { return rng_seed_; }

private:
    ParameterSpace space_;
    Eigen::MatrixXd members_;
    std::size_t iteration_;
    std::uint64_t rng_seed_;
};

/// Column mean and unbiased (N-1) sample covariance, symmetrized.
GaussianSummary ensemble_mean_cov(const Ensemble& e);
GaussianSummary ensemble_mean_cov(const Eigen::Ref<const Eigen::MatrixXd>& members);

/// `count` draws from N(mean, covariance), one per column. Positive
/// semidefinite covariances are handled through a symmetric square root.
Eigen::MatrixXd sample_gaussian(const GaussianSummary& dist, Eigen::Index count, std::uint64_t seed);

/// Lower-triangular factor S with S S^T = cov. Falls back to the symmetric
/// eigen square root when Cholesky fails on a semidefinite matrix.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov);

/// p measurements with a positive semidefinite noise covariance R.
class ObservationSet {
public:
    ObservationSet(Eigen::VectorXd y, Eigen::MatrixXd noise_cov, std::vector<std::string> labels);

    const Eigen::VectorXd& y() const noexcept { return y_; }
    const Eigen::MatrixXd& noise_cov() const noexcept { return noise_cov_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    Eigen::Index size() const noexcept { return y_.size(); }

private:
    Eigen::VectorXd y_;
    Eigen::MatrixXd noise_cov_;
    std::vector<std::string> labels_;
};

}  // namespace gpenkf
