#pragma once

#include <functional>

#include <Eigen/Dense>

namespace gpenkf {

/// Measurement operator seen by the samplers: predictive means and variances
/// of p outputs at a batch of parameter points (columns).
class ObservationOperator {
public:
    virtual ~ObservationOperator() = default;

    virtual Eigen::Index input_dim() const = 0;
    virtual Eigen::Index output_dim() const = 0;

    /// `means` and `variances` are resized to p x N.
    virtual void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::MatrixXd& means,
                          Eigen::MatrixXd& variances) const = 0;
};

/// h(theta) = A theta + b with zero predictive variance.
class LinearOperator final : public ObservationOperator {
public:
    explicit LinearOperator(Eigen::MatrixXd A, Eigen::VectorXd offset = {});

    Eigen::Index input_dim() const override { return A_.cols(); }
    Eigen::Index output_dim() const override { return A_.rows(); }
    void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::MatrixXd& means,
                  Eigen::MatrixXd& variances) const override;

    const Eigen::MatrixXd& matrix() const noexcept { return A_; }

private:
    Eigen::MatrixXd A_;
    Eigen::VectorXd offset_;
};

/// Exact (deterministic) forward map evaluated column by column.
class FunctionOperator final : public ObservationOperator {
public:
    using Map = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

    FunctionOperator(Map f, Eigen::Index input_dim, Eigen::Index output_dim)
        : f_(std::move(f)), input_dim_(input_dim), output_dim_(output_dim) {}

    Eigen::Index input_dim() const override { return input_dim_; }
    Eigen::Index output_dim() const override { return output_dim_; }
    void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::MatrixXd& means,
                  Eigen::MatrixXd& variances) const override;

private:
    Map f_;
    Eigen::Index input_dim_;
    Eigen::Index output_dim_;
};

}  // namespace gpenkf
