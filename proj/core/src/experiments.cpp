#include "gpenkf/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "gpenkf/errors.hpp"
#include "gpenkf/parallel.hpp"
#include "gpenkf/random.hpp"
#include "json.hpp"

namespace gpenkf::experiments {

namespace {

using json = nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

mms::OutputType type_of_label(const std::string& label) {
    const auto at = label.find('@');
    const std::string prefix = label.substr(0, at);
    for (auto t : mms::kOutputTypes)
        if (prefix == mms::to_string(t)) return t;
    throw InvalidArgument("output label '" + label + "' has no known output type");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median_of(std::vector<double> v) { return quantiles(std::move(v)).median; }

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json quantiles_json(const Quantiles& q) {
    return {{"count", q.count}, {"min", number(q.min)}, {"q1", number(q.q1)},       {"median", number(q.median)},
            {"q3", number(q.q3)},  {"max", number(q.max)}};
}

}  // namespace

std::string to_string(MeasurementSet s) {
    switch (s) {
        case MeasurementSet::S1: return "S1";
        case MeasurementSet::S1S2: return "S1+S2";
        case MeasurementSet::S1S2APD: return "S1+S2+APD";
    }
    return "?";
}

MeasurementSet parse_measurement_set(const std::string& text) {
    for (auto s : kMeasurementSets)
        if (to_string(s) == text) return s;
    throw InvalidArgument("unknown measurement set '" + text + "' (expected S1, S1+S2 or S1+S2+APD)");
}

std::vector<mms::OutputType> output_types(MeasurementSet s) {
    using T = mms::OutputType;
    switch (s) {
        case MeasurementSet::S1: return {T::S1};
        case MeasurementSet::S1S2: return {T::S1, T::S2};
        case MeasurementSet::S1S2APD: return {T::S1, T::S2, T::APD};
    }
    return {};
}

std::vector<int> selected_outputs(MeasurementSet s, const std::vector<std::string>& labels) {
    const auto types = output_types(s);
    std::vector<int> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (std::find(types.begin(), types.end(), type_of_label(labels[i])) != types.end())
            rows.push_back(static_cast<int>(i));
    return rows;
}

ObservationSet make_synthetic_obs(const Eigen::Ref<const Eigen::VectorXd>& outputs,
                                  const std::vector<std::string>& labels, const CalibrationCase& c) {
    if (outputs.size() != static_cast<Eigen::Index>(labels.size()))
        throw DimensionMismatch("one label per output is required");
    if (!outputs.allFinite()) throw InvalidArgument("truth outputs are incomplete");
    if (!(c.noise.lat >= 0.0) || !(c.noise.apd >= 0.0)) throw InvalidArgument("noise sd must be non-negative");

    Rng rng(c.seed);
    const Eigen::VectorXd z = rng.normal_vector(outputs.size());
    const std::vector<int> rows = selected_outputs(c.measurement_set, labels);
    if (rows.empty()) throw InvalidArgument("measurement set selects no outputs");

    const auto p = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd y(p), var(p);
    std::vector<std::string> selected;
    for (Eigen::Index i = 0; i < p; ++i) {
        const int r = rows[static_cast<std::size_t>(i)];
        const double sd = c.noise.sd(type_of_label(labels[static_cast<std::size_t>(r)]));
        y[i] = outputs[r] + sd * z[r];
        var[i] = sd * sd;
        selected.push_back(labels[static_cast<std::size_t>(r)]);
    }
    return {y, Eigen::MatrixXd(var.asDiagonal()), selected};
}

GaussianSummary box_initial_distribution(const ParameterSpace& space) {
    for (const auto& b : space.bounds())
        if (!b.finite()) throw InvalidArgument("box initial distribution needs finite bounds");
    const Eigen::VectorXd sd = (space.upper() - space.lower()) / 4.0;
    return {space.midpoint(), Eigen::MatrixXd(sd.array().square().matrix().asDiagonal())};
}

Eigen::VectorXd held_out_r2(const gp::EmulatorBank& bank, const design::TrainingEnsemble& ensemble) {
    if (bank.labels() != ensemble.labels) throw DimensionMismatch("bank and ensemble outputs differ");
    if (ensemble.validation_rows.empty()) throw InvalidArgument("ensemble has no validation rows");
    const Eigen::MatrixXd X = ensemble.rows_of(ensemble.params, ensemble.validation_rows);
    const Eigen::MatrixXd Y = ensemble.rows_of(ensemble.outputs, ensemble.validation_rows);
    const gp::BankPrediction pred = gp::predict_bank(bank, X.transpose());
    Eigen::VectorXd r2(bank.output_dim());
    for (Eigen::Index j = 0; j < r2.size(); ++j) r2[j] = gp::r_squared(Y.col(j), pred.means.row(j).transpose());
    return r2;
}

Eigen::VectorXd LearningCurve::median() const {
    Eigen::VectorXd out(r2.rows());
    for (Eigen::Index i = 0; i < r2.rows(); ++i) {
        std::vector<double> row;
        for (Eigen::Index j = 0; j < r2.cols(); ++j) row.push_back(r2(i, j));
        out[i] = median_of(std::move(row));
    }
    return out;
}

Eigen::VectorXd LearningCurve::minimum() const { return r2.rowwise().minCoeff(); }

LearningCurve r2_learning_curve(const design::TrainingEnsemble& ensemble, const std::vector<int>& sizes,
                                const gp::FitOptions& options, int threads) {
    LearningCurve curve;
    curve.sizes = sizes;
    curve.r2.resize(static_cast<Eigen::Index>(sizes.size()), ensemble.outputs.cols());
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        const int n = sizes[s];
        if (n < 2 || n > static_cast<int>(ensemble.train_rows.size()))
            throw InvalidArgument("learning-curve size must lie in [2, number of training rows]");
        const std::vector<int> rows(ensemble.train_rows.begin(), ensemble.train_rows.begin() + n);
        const auto bank = gp::EmulatorBank::fit(ensemble.rows_of(ensemble.params, rows),
                                                ensemble.rows_of(ensemble.outputs, rows), ensemble.labels, options,
                                                threads);
        curve.r2.row(static_cast<Eigen::Index>(s)) = held_out_r2(bank, ensemble).transpose();
    }
    return curve;
}

Quantiles quantiles(std::vector<double> values) {
    values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
                 values.end());
    Quantiles q;
    q.count = static_cast<int>(values.size());
    if (values.empty()) {
        q.min = q.q1 = q.median = q.q3 = q.max = kNaN;
        return q;
    }
    std::sort(values.begin(), values.end());
    auto at = [&](double prob) {
        const double pos = prob * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    q.min = values.front();
    q.q1 = at(0.25);
    q.median = at(0.5);
    q.q3 = at(0.75);
    q.max = values.back();
    return q;
}

double pearson_correlation(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("correlation needs equally long vectors");
    if (a.size() < 2) return kNaN;
    const Eigen::ArrayXd da = a.array() - a.mean();
    const Eigen::ArrayXd db = b.array() - b.mean();
    const double denom = std::sqrt(da.square().sum() * db.square().sum());
    return denom > 0.0 ? (da * db).sum() / denom : kNaN;
}

std::vector<const CaseReport*> StudyReport::of(MeasurementSet s, bool ok_only) const {
    std::vector<const CaseReport*> out;
    for (const auto& c : cases)
        if (c.calibration.measurement_set == s && (c.ok || !ok_only)) out.push_back(&c);
    return out;
}

std::vector<const CaseReport*> StudyReport::failed() const {
    std::vector<const CaseReport*> out;
    for (const auto& c : cases)
        if (!c.ok) out.push_back(&c);
    return out;
}

double StudyReport::correlation(MeasurementSet s, Eigen::Index j) const {
    const auto rows = of(s);
    Eigen::VectorXd truth(static_cast<Eigen::Index>(rows.size())), est(truth.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        truth[static_cast<Eigen::Index>(i)] = rows[i]->truth[j];
        est[static_cast<Eigen::Index>(i)] = rows[i]->posterior.mean[j];
    }
    return pearson_correlation(truth, est);
}

Quantiles StudyReport::rmse_quantiles(MeasurementSet s, mms::OutputType t) const {
    std::vector<double> v;
    for (const auto* c : of(s)) v.push_back(c->rmse[static_cast<std::size_t>(t)]);
    return quantiles(std::move(v));
}

StudyReport run_study(const StudyOptions& options, const gp::EmulatorBank& bank,
                      const design::TrainingEnsemble& ensemble) {
    if (options.n_cases < 1) throw InvalidArgument("study needs at least one case");
    if (options.sets.empty()) throw InvalidArgument("study needs at least one measurement set");
    if (ensemble.validation_rows.empty()) throw InvalidArgument("ensemble has no validation rows");
    if (bank.labels() != ensemble.labels) throw DimensionMismatch("bank and ensemble outputs differ");

    const ParameterSpace& space = ensemble.space;
    EnkfConfig base;
    base.ensemble_size = options.ensemble_size;
    base.iterations = options.iterations;
    base.space = space;
    base.initial = options.initial ? *options.initial : box_initial_distribution(space);
    base.sigma_theta = options.sigma_theta.size() ? options.sigma_theta : EnkfConfig::default_sigma_theta(space);
    base.validate();

    std::vector<gp::EmulatorBank> sub_banks;
    for (auto s : options.sets) {
        std::vector<std::string> names;
        for (int r : selected_outputs(s, bank.labels())) names.push_back(bank.labels()[static_cast<std::size_t>(r)]);
        sub_banks.push_back(bank.select(names));
    }

    StudyReport report;
    report.parameter_names = space.names();
    report.sets = options.sets;
    const std::size_t n_sets = options.sets.size();
    report.cases.resize(static_cast<std::size_t>(options.n_cases) * n_sets);

    const auto n_val = ensemble.validation_rows.size();
    parallel_for(static_cast<std::size_t>(options.n_cases), options.threads, [&](std::size_t i) {
        const int truth_id = ensemble.validation_rows[i % n_val];
        const Eigen::VectorXd truth = ensemble.params.row(truth_id).transpose();
        const std::uint64_t noise_seed = derive_seed(options.seed, i);

        std::optional<mms::S1S2Run> truth_run;
        std::string truth_error;
        double truth_seconds = 0.0;
        try {
            const auto t0 = std::chrono::steady_clock::now();
            truth_run = mms::s1s2_run(mms::TissueParams::from_vector(truth), options.geometry, options.protocol,
                                      options.simulation);
            truth_seconds = seconds_since(t0);
        } catch (const Error& e) {
            truth_error = e.kind() + ": " + e.what();
        }

        for (std::size_t k = 0; k < n_sets; ++k) {
            CaseReport& rep = report.cases[i * n_sets + k];
            rep.case_index = static_cast<int>(i);
            rep.calibration = {truth_id, options.sets[k], options.noise, noise_seed};
            rep.truth = truth;
            rep.rmse.fill(kNaN);
            rep.simulation_seconds = truth_seconds;
            if (!truth_run) {
                rep.error = truth_error;
                continue;
            }
            try {
                const ObservationSet obs = make_synthetic_obs(truth_run->outputs, ensemble.labels, rep.calibration);
                EnkfConfig cfg = base;
                cfg.seed = derive_seed(options.seed, i, 1 + static_cast<std::uint64_t>(options.sets[k]));
                auto t0 = std::chrono::steady_clock::now();
                const EnkfResult r = run_enkf(cfg, sub_banks[k], obs);
                rep.enkf_seconds = seconds_since(t0);
                rep.posterior = r.posterior;

                t0 = std::chrono::steady_clock::now();
                const auto est = mms::s1s2_run(mms::TissueParams::from_vector(r.posterior.mean), options.geometry,
                                               options.protocol, options.simulation);
                rep.simulation_seconds += seconds_since(t0);

                bool any = false;
                for (auto t : mms::kOutputTypes) {
                    const Eigen::VectorXd& a = truth_run->field.field(t);
                    const Eigen::VectorXd& b = est.field.field(t);
                    double sum = 0.0;
                    int used = 0, missing = 0;
                    for (Eigen::Index n = 0; n < a.size(); ++n) {
                        if (std::isfinite(a[n]) && std::isfinite(b[n])) {
                            sum += (a[n] - b[n]) * (a[n] - b[n]);
                            ++used;
                        } else {
                            ++missing;
                        }
                    }
                    const auto ti = static_cast<std::size_t>(t);
                    rep.missing_nodes[ti] = missing;
                    rep.rmse[ti] = used > 0 ? std::sqrt(sum / used) : kNaN;
                    any = any || used > 0;
                }
                if (!any) throw Degenerate("posterior-mean simulation produced no activation markers");
                rep.ok = true;
            } catch (const Error& e) {
                rep.error = e.kind() + ": " + e.what();
            }
        }
    });
    return report;
}

io::Table scatter_table(const StudyReport& report, const io::Metadata& meta) {
    io::Table t;
    t.meta = meta;
    for (std::size_t k = 0; k < report.sets.size(); ++k)
        t.meta.emplace_back("set" + std::to_string(static_cast<int>(report.sets[k])), to_string(report.sets[k]));
    t.header = {"case", "set", "truth_id", "ok"};
    for (const auto& n : report.parameter_names) {
        t.header.push_back("truth_" + n);
        t.header.push_back("mean_" + n);
        t.header.push_back("sd_" + n);
    }
    const auto d = static_cast<Eigen::Index>(report.parameter_names.size());
    t.values.setConstant(static_cast<Eigen::Index>(report.cases.size()), 4 + 3 * d, kNaN);
    for (std::size_t r = 0; r < report.cases.size(); ++r) {
        const auto& c = report.cases[r];
        const auto i = static_cast<Eigen::Index>(r);
        t.values(i, 0) = c.case_index;
        t.values(i, 1) = static_cast<int>(c.calibration.measurement_set);
        t.values(i, 2) = c.calibration.truth_id;
        t.values(i, 3) = c.ok ? 1.0 : 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            t.values(i, 4 + 3 * j) = c.truth[j];
            if (c.posterior.dim() == d) {
                t.values(i, 5 + 3 * j) = c.posterior.mean[j];
                t.values(i, 6 + 3 * j) = std::sqrt(std::max(c.posterior.covariance(j, j), 0.0));
            }
        }
    }
    return t;
}

io::Table rmse_table(const StudyReport& report, const io::Metadata& meta) {
    io::Table t;
    t.meta = meta;
    for (auto s : report.sets) t.meta.emplace_back("set" + std::to_string(static_cast<int>(s)), to_string(s));
    for (auto ty : mms::kOutputTypes) t.meta.emplace_back("type" + std::to_string(static_cast<int>(ty)), mms::to_string(ty));
    t.header = {"set", "type", "count", "min", "q1", "median", "q3", "max"};
    t.values.resize(static_cast<Eigen::Index>(report.sets.size() * mms::kOutputTypes.size()), 8);
    Eigen::Index row = 0;
    for (auto s : report.sets)
        for (auto ty : mms::kOutputTypes) {
            const Quantiles q = report.rmse_quantiles(s, ty);
            t.values.row(row++) << static_cast<int>(s), static_cast<int>(ty), q.count, q.min, q.q1, q.median, q.q3,
                q.max;
        }
    return t;
}

std::string study_json(const StudyReport& report, const io::Metadata& meta) {
    json o;
    json m = json::object();
    for (const auto& [k, v] : meta) m[k] = v;
    o["meta"] = std::move(m);
    o["parameters"] = report.parameter_names;
    o["cases"] = report.cases.size() / std::max<std::size_t>(report.sets.size(), 1);
    json sets = json::array();
    for (auto s : report.sets) {
        json entry;
        entry["set"] = to_string(s);
        entry["succeeded"] = report.of(s).size();
        json corr = json::object();
        for (std::size_t j = 0; j < report.parameter_names.size(); ++j)
            corr[report.parameter_names[j]] = number(report.correlation(s, static_cast<Eigen::Index>(j)));
        entry["correlation"] = std::move(corr);
        json rmse = json::object();
        for (auto t : mms::kOutputTypes) rmse[mms::to_string(t)] = quantiles_json(report.rmse_quantiles(s, t));
        entry["rmse"] = std::move(rmse);
        sets.push_back(std::move(entry));
    }
    o["sets"] = std::move(sets);
    json failed = json::array();
    for (const auto* c : report.failed())
        failed.push_back({{"case", c->case_index},
                          {"set", to_string(c->calibration.measurement_set)},
                          {"truth_id", c->calibration.truth_id},
                          {"error", c->error}});
    o["failed"] = std::move(failed);
    return o.dump(2) + "\n";
}

ComparisonReport compare_posteriors(const EnkfResult& enkf, const McmcResult& mcmc,
                                    const std::vector<std::string>& names) {
    const Eigen::Index d = enkf.posterior.dim();
    if (mcmc.samples.cols() != d) throw DimensionMismatch("EnKF and MCMC dimensions differ");
    if (static_cast<Eigen::Index>(names.size()) != d) throw DimensionMismatch("one name per parameter is required");
    const GaussianSummary ms = mcmc.summary();

    ComparisonReport r;
    r.names = names;
    r.enkf_mean = enkf.posterior.mean;
    r.mcmc_mean = ms.mean;
    r.enkf_sd = enkf.posterior.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    r.mcmc_sd = ms.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    const auto n = static_cast<double>(enkf.final_ensemble.size());
    Eigen::VectorXd ess = mcmc.ess.size() == d ? mcmc.ess : Eigen::VectorXd::Constant(d, static_cast<double>(mcmc.samples.rows()));
    r.standard_error = (r.enkf_sd.array().square() / n + r.mcmc_sd.array().square() / ess.array()).sqrt();
    r.mean_z = (r.enkf_mean - r.mcmc_mean).array() / r.standard_error.array();
    r.sd_ratio = r.enkf_sd.array() / r.mcmc_sd.array();
    r.enkf_draws = enkf.final_ensemble.members().transpose();
    r.mcmc_draws = mcmc.samples;
    return r;
}

ComparisonReport compare_enkf_mcmc(const EnkfConfig& enkf, const McmcConfig& mcmc, const ObservationOperator& op,
                                   const ObservationSet& obs) {
    if (!(enkf.space == mcmc.space)) throw InvalidArgument("EnKF and MCMC parameter spaces differ");
    if (enkf.initial.mean != mcmc.prior.mean || enkf.initial.covariance != mcmc.prior.covariance)
        throw InvalidArgument("MCMC prior must equal the EnKF initial distribution");
    const EnkfResult e = run_enkf(enkf, op, obs);
    const McmcResult m = run_mcmc(mcmc, op, obs);
    return compare_posteriors(e, m, enkf.space.names());
}

InflationReport variance_inflation(const EnkfConfig& cfg, const ObservationOperator& op, const ObservationSet& obs,
                                   int n_seeds, std::uint64_t seed) {
    if (n_seeds < 2) throw InvalidArgument("variance inflation check needs at least two seeds");
    InflationReport r;
    r.trace_with.resize(n_seeds);
    r.trace_without.resize(n_seeds);
    for (int s = 0; s < n_seeds; ++s) {
        EnkfConfig with = cfg;
        with.seed = derive_seed(seed, static_cast<std::uint64_t>(s));
        EnkfConfig without = with;
        without.sigma_theta.setZero();
        r.trace_with[s] = run_enkf(with, op, obs).posterior.covariance.trace();
        r.trace_without[s] = run_enkf(without, op, obs).posterior.covariance.trace();
    }
    const Eigen::ArrayXd diff = (r.trace_with - r.trace_without).array();
    r.mean_difference = diff.mean();
    r.standard_error = std::sqrt((diff - diff.mean()).square().sum() / (n_seeds - 1.0) / n_seeds);
    r.bound = cfg.iterations * cfg.sigma_theta.squaredNorm();
    return r;
}

Eigen::VectorXd ToyProblem::outputs(const Eigen::Ref<const Eigen::Vector2d>& theta) const {
    return toy_forward(theta, locations);
}

std::vector<std::string> ToyProblem::labels() const {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < locations.size(); ++i) out.push_back("y@" + std::to_string(i));
    return out;
}

ObservationSet ToyProblem::observations(std::uint64_t seed) const {
    Rng rng(seed);
    const Eigen::VectorXd y = outputs(truth) + noise_sd * rng.normal_vector(locations.size());
    return {y, Eigen::MatrixXd::Identity(locations.size(), locations.size()) * (noise_sd * noise_sd), labels()};
}

gp::EmulatorBank ToyProblem::emulator(int n_points, std::uint64_t seed, const gp::FitOptions& options) const {
    const auto design = design::lhs_sample(n_points, ParameterSpace::toy(), seed, 100);
    Eigen::MatrixXd Y(n_points, locations.size());
    for (int i = 0; i < n_points; ++i) Y.row(i) = outputs(design.points.row(i).transpose()).transpose();
    gp::FitOptions fit = options;
    fit.seed = derive_seed(seed, 1);
    return gp::EmulatorBank::fit(design.points, Y, labels(), fit);
}

EnkfConfig ToyProblem::enkf_config(std::uint64_t seed) const {
    EnkfConfig cfg;
    cfg.space = ParameterSpace::toy();
    cfg.initial = {Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    cfg.sigma_theta = Eigen::Vector2d::Constant(kToySigmaTheta);
    cfg.seed = seed;
    return cfg;
}

}  // namespace gpenkf::experiments
