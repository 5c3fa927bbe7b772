#include <cmath>

#include "doctest.h"
#include "gpenkf/errors.hpp"
#include "gpenkf/io.hpp"

using namespace gpenkf;
using namespace gpenkf::io;

TEST_CASE("CSV tables round-trip exactly, NaN included") {
    Table t;
    t.meta = {{"seed", "7"}, {"config_hash", "abc"}};
    t.header = {"a", "b"};
    t.values.resize(2, 2);
    t.values << 0.1, std::nextafter(1.0, 2.0), NAN, -3e-300;
    const Table r = table_from_csv(table_to_csv(t));
    CHECK(r.meta == t.meta);
    CHECK(r.header == t.header);
    CHECK(r.values(0, 0) == 0.1);
    CHECK(r.values(0, 1) == std::nextafter(1.0, 2.0));
    CHECK(std::isnan(r.values(1, 0)));
    CHECK(r.values(1, 1) == -3e-300);
    CHECK(r.column("b") == 1);
    CHECK_THROWS_AS(r.column("c"), FormatError);
    CHECK_THROWS_AS(table_from_csv("a,b\n1,2,3\n"), FormatError);
}

TEST_CASE("Gaussian summaries and observations round-trip") {
    GaussianSummary g{Eigen::Vector2d(1.0 / 3.0, -2.0), Eigen::Matrix2d::Identity()};
    g.covariance(0, 1) = g.covariance(1, 0) = 0.25;
    const GaussianSummary h = gaussian_from_json(gaussian_to_json(g, {"x", "y"}));
    CHECK(h.mean == g.mean);
    CHECK(h.covariance == g.covariance);

    const ObservationSet obs(Eigen::Vector2d(0.1, 0.2), 0.5 * Eigen::Matrix2d::Identity(), {"S1@0", "S1@1"});
    const ObservationSet back = observations_from_json(observations_to_json(obs));
    CHECK(back.y() == obs.y());
    CHECK(back.noise_cov() == obs.noise_cov());
    CHECK(back.labels() == obs.labels());

    const ObservationSet diag = observations_from_json(R"({"labels":["a"],"y":[1.5],"noise_sd":[0.2]})");
    CHECK(diag.noise_cov()(0, 0) == doctest::Approx(0.04));
    CHECK_THROWS_AS(observations_from_json("{\"y\": [1]}"), FormatError);
}

TEST_CASE("ensemble tables keep parameter names") {
    const ParameterSpace space = ParameterSpace::toy();
    const Ensemble e(space, Eigen::MatrixXd::Random(2, 4));
    const Table t = ensemble_table(e);
    CHECK(t.header == space.names());
    CHECK(ensemble_from_table(t, space).members() == e.members());
}
