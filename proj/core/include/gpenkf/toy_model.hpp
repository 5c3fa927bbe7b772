#pragma once

#include <Eigen/Dense>

namespace gpenkf {

/// y_i = -theta1^3 x_i + theta2^3 x_i^2
Eigen::VectorXd toy_forward(const Eigen::Ref<const Eigen::Vector2d>& theta,
                            const Eigen::Ref<const Eigen::VectorXd>& locations);

/// Measurement locations of the reference toy calibration.
inline Eigen::VectorXd toy_locations() { return Eigen::Vector3d(0.5, 1.0, 2.0); }

inline Eigen::Vector2d toy_truth() { return {-1.5, 2.0}; }

}  // namespace gpenkf
