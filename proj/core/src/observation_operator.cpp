#include "gpenkf/observation_operator.hpp"

#include "gpenkf/errors.hpp"

namespace gpenkf {

LinearOperator::LinearOperator(Eigen::MatrixXd A, Eigen::VectorXd offset) : A_(std::move(A)), offset_(std::move(offset)) {
    if (offset_.size() == 0) offset_ = Eigen::VectorXd::Zero(A_.rows());
    if (offset_.size() != A_.rows()) throw DimensionMismatch("offset length must equal the number of outputs");
}

void LinearOperator::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::MatrixXd& means,
                              Eigen::MatrixXd& variances) const {
    if (thetas.rows() != A_.cols()) throw DimensionMismatch("parameter dimension does not match operator");
    means = (A_ * thetas).colwise() + offset_;
    variances = Eigen::MatrixXd::Zero(A_.rows(), thetas.cols());
}

void FunctionOperator::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::MatrixXd& means,
                                Eigen::MatrixXd& variances) const {
    if (thetas.rows() != input_dim_) throw DimensionMismatch("parameter dimension does not match operator");
    means.resize(output_dim_, thetas.cols());
    for (Eigen::Index n = 0; n < thetas.cols(); ++n) {
        Eigen::VectorXd out = f_(thetas.col(n));
        if (out.size() != output_dim_) throw DimensionMismatch("forward map returned the wrong number of outputs");
        means.col(n) = out;
    }
    variances = Eigen::MatrixXd::Zero(output_dim_, thetas.cols());
}

}  // namespace gpenkf
