#include "gpenkf/design.hpp"

#include <cmath>
#include <numeric>

#include "gpenkf/errors.hpp"
#include "gpenkf/markers.hpp"
#include "gpenkf/parallel.hpp"
#include "gpenkf/random.hpp"

namespace gpenkf::design {

namespace {

void shuffle(std::vector<int>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

double sigmoid(double t) {
    return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

}  // namespace

double min_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& unit_points) {
    const Eigen::Index M = unit_points.rows();
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = i + 1; j < M; ++j)
            best = std::min(best, (unit_points.row(i) - unit_points.row(j)).squaredNorm());
    return std::sqrt(best);
}

LhsDesign lhs_sample(Eigen::Index M, const ParameterSpace& space, std::uint64_t seed, int restarts) {
    const Eigen::Index d = space.dim();
    if (d < 1) throw InvalidArgument("LHS needs at least one dimension");
    if (M < d) throw InvalidArgument("LHS needs at least as many points as dimensions");
    if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
    for (const auto& b : space.bounds())
        if (!b.finite()) throw InvalidArgument("LHS needs finite bounds");

    Eigen::MatrixXd best;
    double best_dist = -1.0;
    std::vector<int> perm(static_cast<std::size_t>(M));
    Eigen::MatrixXd unit(M, d);
    for (int r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        for (Eigen::Index j = 0; j < d; ++j) {
            std::iota(perm.begin(), perm.end(), 0);
            shuffle(perm, rng);
            for (Eigen::Index i = 0; i < M; ++i)
                unit(i, j) = (perm[static_cast<std::size_t>(i)] + rng.uniform()) / static_cast<double>(M);
        }
        const double dist = M > 1 ? min_pairwise_distance(unit) : 0.0;
        if (dist > best_dist) {
            best_dist = dist;
            best = unit;
        }
    }
    const Eigen::RowVectorXd lo = space.lower().transpose();
    const Eigen::RowVectorXd width = (space.upper() - space.lower()).transpose();
    LhsDesign out;
    out.points = (best.array().rowwise() * width.array()).rowwise() + lo.array();
    out.seed = seed;
    out.min_distance = best_dist;
    return out;
}

double FeasibilityClassifier::probability(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() < weights.size()) throw DimensionMismatch("classifier input is too short");
    const Eigen::VectorXd z = (x.head(weights.size()) - input_mean).cwiseQuotient(input_scale);
    return sigmoid(weights.dot(z) + intercept);
}

bool FeasibilityClassifier::accepts(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return probability(x) > threshold + margin;
}

double FeasibilityClassifier::accuracy(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<bool>& labels) const {
    if (static_cast<std::size_t>(X.rows()) != labels.size()) throw DimensionMismatch("one label per row required");
    if (labels.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        if (accepts(X.row(i).transpose()) == labels[static_cast<std::size_t>(i)]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

FeasibilityClassifier train_classifier(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<bool>& labels,
                                       const ClassifierOptions& options) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (static_cast<std::size_t>(n) != labels.size()) throw DimensionMismatch("one label per row required");
    if (n < 2 || k < 1) throw InvalidArgument("classifier needs at least two examples and one feature");
    const auto positives = std::count(labels.begin(), labels.end(), true);
    if (positives == 0 || positives == n) throw Degenerate("all classifier labels are identical");

    FeasibilityClassifier c;
    c.input_mean = X.colwise().mean().transpose();
    c.input_scale = ((X.rowwise() - c.input_mean.transpose()).array().square().colwise().sum() /
                     static_cast<double>(n - 1)).sqrt().transpose();
    for (Eigen::Index j = 0; j < k; ++j)
        if (!(c.input_scale[j] > 0.0)) c.input_scale[j] = 1.0;
    const Eigen::MatrixXd Z = (X.rowwise() - c.input_mean.transpose()).array().rowwise() /
                              c.input_scale.transpose().array();
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) t[i] = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    c.weights = Eigen::VectorXd::Zero(k);
    const double rate = options.learning_rate;
    for (c.iterations = 0; c.iterations < options.max_iterations; ++c.iterations) {
        const Eigen::VectorXd logits = (Z * c.weights).array() + c.intercept;
        const Eigen::VectorXd resid = t - logits.unaryExpr([](double v) { return sigmoid(v); });
        const Eigen::VectorXd gw = Z.transpose() * resid / static_cast<double>(n) - options.l2 * c.weights;
        const double gb = resid.mean();
        if (std::sqrt(gw.squaredNorm() + gb * gb) < options.gradient_tolerance) break;
        c.weights += rate * gw;
        c.intercept += rate * gb;
    }
    return c;
}

ParameterSpace cell_space() {
    const ParameterSpace full = ParameterSpace::mms();
    std::vector<std::string> names(full.names().begin(), full.names().begin() + 4);
    std::vector<Bound> bounds(full.bounds().begin(), full.bounds().begin() + 4);
    return {std::move(names), std::move(bounds)};
}

CellTrainingReport train_cell_classifier(const CellTrainingOptions& options) {
    if (options.samples < 4) throw InvalidArgument("too few cell samples");
    if (!(options.holdout_fraction >= 0.0 && options.holdout_fraction < 1.0))
        throw InvalidArgument("holdout_fraction must lie in [0, 1)");
    const ParameterSpace space = cell_space();
    CellTrainingReport report;
    report.inputs = lhs_sample(options.samples, space, options.seed, options.lhs_restarts).points;
    const auto n = static_cast<std::size_t>(options.samples);
    std::vector<mms::CellFeasibility> results(n);
    parallel_for(n, options.threads, [&](std::size_t i) {
        const Eigen::VectorXd x = report.inputs.row(static_cast<Eigen::Index>(i)).transpose();
        mms::CellParams p;
        p.tau_in = x[0];
        p.tau_out = x[1];
        p.tau_open = x[2];
        p.tau_close = x[3];
        results[i] = mms::cell_feasibility(p, options.protocol);
    });
    for (const auto& r : results) {
        report.labels.push_back(r.feasible);
        report.reasons.push_back(r.reason);
    }
    report.training_count = options.samples - static_cast<Eigen::Index>(std::llround(options.holdout_fraction *
                                                                               static_cast<double>(options.samples)));
    const std::vector<bool> train_labels(report.labels.begin(), report.labels.begin() + report.training_count);
    const std::vector<bool> held_labels(report.labels.begin() + report.training_count, report.labels.end());
    report.classifier = train_classifier(report.inputs.topRows(report.training_count), train_labels, options.classifier);
    report.classifier.margin = options.margin;
    report.training_accuracy = report.classifier.accuracy(report.inputs.topRows(report.training_count), train_labels);
    report.holdout_accuracy =
        report.classifier.accuracy(report.inputs.bottomRows(options.samples - report.training_count), held_labels);
    return report;
}

std::string to_string(PointStatus s) {
    switch (s) {
        case PointStatus::Accepted: return "accepted";
        case PointStatus::RejectedByClassifier: return "rejected_classifier";
        case PointStatus::RejectedBySimulation: return "rejected_simulation";
    }
    return "unknown";
}

Eigen::MatrixXd TrainingEnsemble::rows_of(const Eigen::MatrixXd& m, const std::vector<int>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

std::pair<int, int> split_sizes(int n, double fraction) {
    if (n < 0 || !(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("invalid split");
    const int train = static_cast<int>(std::lround(fraction * n));
    return {train, n - train};
}

TrainingEnsemble build_ensemble(const EnsembleOptions& options, const FeasibilityClassifier& classifier) {
    options.geometry.validate();
    options.protocol.validate();
    TrainingEnsemble out;
    out.space = ParameterSpace::mms();
    const Eigen::Index d = out.space.dim();
    const int n_sensors = static_cast<int>(options.geometry.sensors.size());
    out.labels = mms::output_labels(n_sensors);

    const Eigen::MatrixXd lhs = lhs_sample(options.initial_size, out.space, derive_seed(options.seed, 1),
                                           options.lhs_restarts).points;
    std::vector<std::size_t> candidates;
    for (Eigen::Index i = 0; i < lhs.rows(); ++i) {
        DesignPoint pt;
        pt.id = static_cast<int>(i);
        pt.params = lhs.row(i).transpose();
        pt.probability = classifier.probability(pt.params.head(4));
        if (!classifier.accepts(pt.params.head(4))) {
            pt.status = PointStatus::RejectedByClassifier;
            pt.reason = "classifier";
        } else {
            candidates.push_back(out.points.size());
        }
        out.points.push_back(std::move(pt));
    }

    std::vector<Eigen::VectorXd> sims(candidates.size());
    parallel_for(candidates.size(), options.threads, [&](std::size_t k) {
        DesignPoint& pt = out.points[candidates[k]];
        try {
            sims[k] = mms::s1s2_outputs(mms::TissueParams::from_vector(pt.params), options.geometry, options.protocol,
                                        options.simulation);
        } catch (const UnstableStep&) {
            pt.status = PointStatus::RejectedBySimulation;
            pt.reason = "unstable";
        }
    });

    std::vector<Eigen::VectorXd> kept;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        DesignPoint& pt = out.points[candidates[k]];
        if (pt.status != PointStatus::Accepted) continue;
        const Eigen::VectorXd& y = sims[k];
        if (!y.allFinite()) {
            pt.status = PointStatus::RejectedBySimulation;
            int missing = 0;
            for (Eigen::Index j = 0; j < y.size(); ++j) missing += std::isfinite(y[j]) ? 0 : 1;
            pt.reason = "missing " + std::to_string(missing) + " outputs";
            continue;
        }
        out.ids.push_back(pt.id);
        kept.push_back(y);
    }

    const int n = static_cast<int>(out.ids.size());
    if (n < 2 * d)
        throw InsufficientSurvivors(std::to_string(n) + " of " + std::to_string(options.initial_size) +
                                    " design points survived; at least " + std::to_string(2 * d) + " are needed");
    out.params.resize(n, d);
    out.outputs.resize(n, 3 * n_sensors);
    for (int i = 0; i < n; ++i) {
        out.params.row(i) = out.points[static_cast<std::size_t>(out.ids[static_cast<std::size_t>(i)])].params.transpose();
        out.outputs.row(i) = kept[static_cast<std::size_t>(i)].transpose();
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(options.seed, 2));
    shuffle(order, rng);
    const int n_train = split_sizes(n, options.train_fraction).first;
    out.train_rows.assign(order.begin(), order.begin() + n_train);
    out.validation_rows.assign(order.begin() + n_train, order.end());
    std::sort(out.train_rows.begin(), out.train_rows.end());
    std::sort(out.validation_rows.begin(), out.validation_rows.end());
    return out;
}

}  // namespace gpenkf::design
