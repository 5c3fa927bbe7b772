#include "gpenkf/toy_model.hpp"

namespace gpenkf {

Eigen::VectorXd toy_forward(const Eigen::Ref<const Eigen::Vector2d>& theta,
                            const Eigen::Ref<const Eigen::VectorXd>& locations) {
    const double a = theta[0] * theta[0] * theta[0];
    const double b = theta[1] * theta[1] * theta[1];
    return (-a * locations.array() + b * locations.array().square()).matrix();
}

}  // namespace gpenkf
