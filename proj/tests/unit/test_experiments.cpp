#include <cmath>

#include "doctest.h"
#include "gpenkf/errors.hpp"
#include "gpenkf/experiments.hpp"

using namespace gpenkf;
using namespace gpenkf::experiments;

TEST_CASE("measurement sets select the right outputs") {
    const auto labels = mms::output_labels(15);
    CHECK(selected_outputs(MeasurementSet::S1, labels).size() == 15);
    CHECK(selected_outputs(MeasurementSet::S1S2, labels).size() == 30);
    CHECK(selected_outputs(MeasurementSet::S1S2APD, labels).size() == 45);
    for (auto s : kMeasurementSets) CHECK(parse_measurement_set(to_string(s)) == s);
    CHECK_THROWS_AS(parse_measurement_set("APD"), InvalidArgument);
}

TEST_CASE("synthetic observations") {
    const auto labels = mms::output_labels(15);
    Eigen::VectorXd outputs(45);
    for (int i = 0; i < 45; ++i) outputs[i] = 10.0 + i;

    CalibrationCase c;
    c.noise = {0.0, 0.0};
    c.measurement_set = MeasurementSet::S1;
    const ObservationSet exact = make_synthetic_obs(outputs, labels, c);
    CHECK(exact.size() == 15);
    CHECK(exact.y() == outputs.head(15));

    c.noise = {1.0, 2.0};
    c.measurement_set = MeasurementSet::S1S2APD;
    c.seed = 9;
    const ObservationSet noisy = make_synthetic_obs(outputs, labels, c);
    CHECK(noisy.size() == 45);
    CHECK(noisy.noise_cov()(0, 0) == 1.0);
    CHECK(noisy.noise_cov()(44, 44) == 4.0);
    CHECK(noisy.noise_cov()(0, 1) == 0.0);

    c.measurement_set = MeasurementSet::S1S2;
    const ObservationSet shared = make_synthetic_obs(outputs, labels, c);
    CHECK(shared.y() == noisy.y().head(30));
}

TEST_CASE("noiseless calibration with the exact map recovers the truth") {
    const ToyProblem toy;
    const FunctionOperator exact(
        [&](const Eigen::VectorXd& theta) { return toy.outputs(theta); }, 2, 3);
    Eigen::VectorXd y = toy.outputs(toy.truth);
    const ObservationSet obs(y, 1e-8 * Eigen::Matrix3d::Identity(), toy.labels());
    EnkfConfig cfg = toy.enkf_config(1);
    cfg.sigma_theta = Eigen::Vector2d::Zero();
    const EnkfResult r = run_enkf(cfg, exact, obs);
    for (int j = 0; j < 2; ++j) CHECK(std::abs(r.posterior.mean[j] - toy.truth[j]) <= 0.01 * std::abs(toy.truth[j]));
}

TEST_CASE("linear-Gaussian comparison of EnKF and MCMC") {
    Eigen::MatrixXd A(2, 2);
    A << 1.0, 0.3, -0.2, 0.8;
    const LinearOperator op(A);
    const ObservationSet obs(Eigen::Vector2d(0.4, 0.1), 0.05 * Eigen::Matrix2d::Identity(), {"a", "b"});
    EnkfConfig enkf;
    enkf.initial = {Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    enkf.space = ParameterSpace::unbounded(2);
    enkf.sigma_theta = Eigen::Vector2d::Zero();
    enkf.seed = 2;
    McmcConfig mcmc;
    mcmc.prior = enkf.initial;
    mcmc.space = enkf.space;
    mcmc.n_chains = 4;
    mcmc.n_samples = 30000;
    mcmc.burn_in = 5000;
    mcmc.seed = 3;
    const ComparisonReport c = compare_enkf_mcmc(enkf, mcmc, op, obs);
    CHECK(c.max_abs_z() < 3.0);
    CHECK(c.max_sd_relative_error() < 0.10);

    mcmc.prior.mean[0] = 1.0;
    CHECK_THROWS_AS(compare_enkf_mcmc(enkf, mcmc, op, obs), InvalidArgument);
}

TEST_CASE("pseudo-dynamics inflation stays within its bound") {
    const LinearOperator op(Eigen::Matrix2d::Identity());
    const ObservationSet obs(Eigen::Vector2d(0.5, -0.5), 0.1 * Eigen::Matrix2d::Identity(), {"a", "b"});
    EnkfConfig cfg;
    cfg.initial = {Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    cfg.space = ParameterSpace::unbounded(2);
    cfg.sigma_theta = Eigen::Vector2d(0.02, 0.01);
    cfg.ensemble_size = 200;
    cfg.iterations = 20;
    const InflationReport r = variance_inflation(cfg, op, obs, 10, 4);
    CHECK(r.bound == doctest::Approx(20 * (0.0004 + 0.0001)));
    CHECK(r.mean_difference > -3.0 * r.standard_error);
    CHECK(r.mean_difference <= r.bound + 3.0 * r.standard_error);
}

TEST_CASE("quantiles and correlation") {
    const Quantiles q = quantiles({4.0, 1.0, 3.0, 2.0, NAN, 5.0});
    CHECK(q.count == 5);
    CHECK(q.min == 1.0);
    CHECK(q.q1 == 2.0);
    CHECK(q.median == 3.0);
    CHECK(q.max == 5.0);
    const Eigen::Vector3d a(1.0, 2.0, 3.0);
    CHECK(pearson_correlation(a, 2.0 * a) == doctest::Approx(1.0));
    CHECK(pearson_correlation(a, -a) == doctest::Approx(-1.0));
}

TEST_CASE("box initial distribution") {
    const GaussianSummary g = box_initial_distribution(ParameterSpace::mms());
    CHECK(g.mean[4] == doctest::Approx(2.55));
    CHECK(std::sqrt(g.covariance(4, 4)) == doctest::Approx(4.9 / 4.0));
}

TEST_CASE("toy problem helpers") {
    const ToyProblem toy;
    CHECK(toy.labels() == std::vector<std::string>{"y@0", "y@1", "y@2"});
    CHECK(toy.outputs(toy.truth)[0] == doctest::Approx(3.6875));
    CHECK(toy.observations(1).y() == toy.observations(1).y());
    CHECK(toy.observations(1).y() != toy.observations(2).y());
    const EnkfConfig cfg = toy.enkf_config(0);
    CHECK(cfg.ensemble_size == 500);
    CHECK(cfg.iterations == 50);
}
