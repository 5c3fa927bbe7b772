// Acceptance run: one PASS/FAIL line per criterion, then a summary line.
// The exit status is non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "gpenkf/design.hpp"
#include "gpenkf/enkf.hpp"
#include "gpenkf/experiments.hpp"
#include "gpenkf/io.hpp"
#include "gpenkf/markers.hpp"
#include "gpenkf/mcmc.hpp"
#include "gpenkf/mms.hpp"
#include "gpenkf/observation_operator.hpp"
#include "gpenkf/random.hpp"

namespace fs = std::filesystem;
using namespace gpenkf;
using experiments::MeasurementSet;
using experiments::ToyProblem;

namespace {

constexpr std::uint64_t kMasterSeed = 20240611;

// Tolerances and limits.
constexpr double kOracleSe = 3.0;             // criteria 1, 4, 7
constexpr double kOracleTraceRel = 0.15;      // criterion 1
constexpr double kScaledCovRel = 0.10;        // criterion 3
constexpr double kGpeSigmas = 3.0;            // criterion 2b
constexpr double kR2Gate = 0.95;              // criterion 5
constexpr double kIdentifiableCorr = 0.9;     // criterion 6a
constexpr double kS2Drop = 2.0;               // criterion 6c
constexpr double kSdRel = 0.25;               // criterion 7
constexpr double kRobustSe = 2.0;             // criterion 8
constexpr double kLatDtRel = 0.005;           // criterion 9
constexpr double kCellMatch = 1e-10;          // criterion 9
constexpr double kCalibrateSeconds = 60.0;    // criterion 10

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Clock {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

std::string vec(const Eigen::VectorXd& v, int precision = 4) {
    std::string out = "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i], precision);
    return out + ")";
}

double median(std::vector<double> v) { return experiments::quantiles(std::move(v)).median; }

std::string timing(double seconds, double limit) {
    return fmt(seconds, 3) + " s (limit " + fmt(limit, 3) + " s)";
}

// ---------------------------------------------------------------------------
// Linear-Gaussian fixtures

struct LinearTarget {
    Eigen::MatrixXd A;
    GaussianSummary prior;
    ObservationSet obs;

    GaussianSummary posterior(double data_weight = 1.0) const {
        const Eigen::MatrixXd Sinv = prior.covariance.inverse();
        const Eigen::MatrixXd Rinv = obs.noise_cov().inverse();
        const Eigen::MatrixXd cov = (Sinv + data_weight * A.transpose() * Rinv * A).inverse();
        const Eigen::VectorXd mean = cov * (Sinv * prior.mean + data_weight * A.transpose() * Rinv * obs.y());
        return {mean, cov};
    }
};

LinearTarget linear_target() {
    Eigen::MatrixXd A(3, 2);
    A << 1.0, 0.5, -0.3, 1.2, 0.8, 0.8;
    GaussianSummary prior{Eigen::Vector2d(0.5, -0.2), Eigen::Matrix2d::Identity()};
    prior.covariance(0, 1) = prior.covariance(1, 0) = 0.3;
    return {A, prior, ObservationSet(Eigen::Vector3d(0.7, 1.1, -0.4), 0.04 * Eigen::Matrix3d::Identity(), {"a", "b", "c"})};
}

EnkfConfig linear_config(const LinearTarget& t, std::uint64_t seed) {
    EnkfConfig cfg;
    cfg.ensemble_size = 500;
    cfg.iterations = 50;
    cfg.sigma_theta = Eigen::VectorXd::Zero(2);
    cfg.initial = t.prior;
    cfg.space = ParameterSpace::unbounded(2);
    cfg.seed = seed;
    return cfg;
}

// ---------------------------------------------------------------------------
// Cached mMS ensemble and bank

struct MmsFixture {
    cli::RunConfig config;
    design::TrainingEnsemble ensemble;
    std::optional<gp::EmulatorBank> bank;
};

cli::RunConfig mms_config(const fs::path& cache) {
    cli::RunConfig cfg = cli::parse_config(R"({"mode": "mms", "seed": 1})", "acceptance");
    cfg.output_dir = cache.string();
    return cfg;
}

MmsFixture& mms_fixture(const fs::path& cache) {
    static std::unique_ptr<MmsFixture> fixture;
    if (fixture) return *fixture;
    fixture = std::make_unique<MmsFixture>();
    fixture->config = mms_config(cache);
    cli::CommandContext ctx;
    ctx.config = fixture->config;
    ctx.out = &std::cerr;
    ctx.err = &std::cerr;
    if (!fs::exists(cache / "ensemble" / "manifest.json")) {
        std::cerr << "building the mMS training ensemble in " << cache << "\n";
        if (cli::run_command("design", ctx) != cli::kExitOk) throw std::runtime_error("design command failed");
    }
    if (!fs::exists(cache / "bank.json")) {
        std::cerr << "fitting the mMS emulator bank in " << cache << "\n";
        const int code = cli::run_command("emulate", ctx);
        if (code != cli::kExitOk && code != cli::kExitEmulation) throw std::runtime_error("emulate command failed");
    }
    const fs::path dir = cache / "ensemble";
    fixture->ensemble = io::training_ensemble_from_files(io::table_from_csv(io::read_text(dir / "params.csv")),
                                                         io::table_from_csv(io::read_text(dir / "outputs.csv")),
                                                         io::read_text(dir / "manifest.json"));
    fixture->bank = io::bank_from_json(io::read_text(cache / "bank.json"));
    return *fixture;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome linear_oracle() {
    Clock clock;
    const LinearTarget t = linear_target();
    const GaussianSummary exact = t.posterior();
    const LinearOperator op(t.A);
    const int seeds = 50;
    Eigen::MatrixXd means(2, seeds);
    double trace = 0.0;
    for (int s = 0; s < seeds; ++s) {
        const EnkfResult r = run_enkf(linear_config(t, derive_seed(kMasterSeed, 1, s)), op, t.obs);
        means.col(s) = r.posterior.mean;
        trace += r.posterior.covariance.trace() / seeds;
    }
    const Eigen::VectorXd avg = means.rowwise().mean();
    const Eigen::VectorXd se =
        ((means.colwise() - avg).array().square().rowwise().sum() / (seeds - 1.0)).sqrt() / std::sqrt(seeds);
    const Eigen::VectorXd z = (avg - exact.mean).cwiseQuotient(se);
    const double trace_rel = std::abs(trace / exact.covariance.trace() - 1.0);
    const double elapsed = clock.seconds();
    const bool pass = z.cwiseAbs().maxCoeff() <= kOracleSe && trace_rel <= kOracleTraceRel && elapsed < 60.0;
    return {pass, "mean z " + vec(z, 3) + " (limit " + fmt(kOracleSe) + "), trace rel err " + fmt(trace_rel, 3) +
                      " (limit " + fmt(kOracleTraceRel) + "), " + timing(elapsed, 60.0)};
}

Outcome toy_recovery() {
    Clock clock;
    const ToyProblem toy;
    const int seeds = 20;
    const std::vector<int> sizes{10, 15, 50};
    std::vector<double> medians;
    int covered = 0, covered_with_noise = 0, total = 0;
    double worst_z = 0.0, worst_residual = 0.0;
    std::vector<double> gpe_sd;
    const Eigen::VectorXd truth_y = toy.outputs(toy.truth);
    for (int n : sizes) {
        std::vector<double> errors;
        for (int r = 0; r < seeds; ++r) {
            const gp::EmulatorBank bank = toy.emulator(n, derive_seed(kMasterSeed, 2, r));
            const ObservationSet obs = toy.observations(derive_seed(kMasterSeed, 3, r));
            const EnkfResult res = run_enkf(toy.enkf_config(derive_seed(kMasterSeed, 4, r)), bank, obs);
            errors.push_back((res.posterior.mean - toy.truth).norm());
            if (n == 50) {
                const gp::BankPrediction p = gp::predict_bank(bank, res.posterior.mean);
                for (Eigen::Index j = 0; j < 3; ++j, ++total) {
                    const double z = std::abs(p.means(j, 0) - truth_y[j]) / std::sqrt(p.variances(j, 0));
                    const double residual = std::abs(p.means(j, 0) - truth_y[j]);
                    worst_z = std::max(worst_z, z);
                    worst_residual = std::max(worst_residual, residual);
                    gpe_sd.push_back(std::sqrt(p.variances(j, 0)));
                    covered += z <= kGpeSigmas;
                    covered_with_noise +=
                        residual <= kGpeSigmas * std::sqrt(p.variances(j, 0) + toy.noise_sd * toy.noise_sd);
                }
            }
        }
        medians.push_back(median(errors));
    }
    const bool monotone = medians[0] > medians[1] && medians[1] > medians[2];
    const double elapsed = clock.seconds();
    const bool pass = monotone && covered == total && elapsed < 300.0;
    return {pass, "(a) median |error| for 10/15/50 points " + fmt(medians[0]) + " / " + fmt(medians[1]) + " / " +
                      fmt(medians[2]) + (monotone ? " decreasing" : " NOT decreasing") + "; (b) " +
                      std::to_string(covered) + "/" + std::to_string(total) + " predicted outputs within " +
                      fmt(kGpeSigmas) + " emulator sd of the noiseless truth (max " + fmt(worst_z, 3) + " sd; max residual " +
                      fmt(worst_residual, 3) + ", median emulator sd " + fmt(median(gpe_sd), 3) + "; " +
                      std::to_string(covered_with_noise) + "/" + std::to_string(total) +
                      " within 3 sd of emulator plus data noise, reported only); " + timing(elapsed, 300.0)};
}

Outcome perturbation_scaling() {
    Clock clock;
    const LinearTarget t = linear_target();
    const LinearOperator op(t.A);
    const int K = 20, seeds = 10;
    double scaled = 0.0, unscaled = 0.0;
    for (int s = 0; s < seeds; ++s) {
        EnkfConfig cfg = linear_config(t, derive_seed(kMasterSeed, 5, s));
        cfg.iterations = K;
        scaled += run_enkf(cfg, op, t.obs).posterior.covariance.trace() / seeds;
        cfg.noise_scaling = NoiseScaling::Unscaled;
        unscaled += run_enkf(cfg, op, t.obs).posterior.covariance.trace() / seeds;
    }
    const double exact = t.posterior().covariance.trace();
    const double over = t.posterior(K).covariance.trace();
    const double scaled_rel = std::abs(scaled / exact - 1.0);
    const double ratio = exact / unscaled;
    const double expected_ratio = exact / over;
    const bool ratio_ok = std::abs(ratio / expected_ratio - 1.0) <= 0.25 && ratio > K / 2.0;
    const double elapsed = clock.seconds();
    const bool pass = scaled_rel <= kScaledCovRel && ratio_ok && elapsed < 60.0;
    return {pass, "K = " + std::to_string(K) + ": scaled trace rel err " + fmt(scaled_rel, 3) + " (limit " +
                      fmt(kScaledCovRel) + "); unscaled shrinks the trace by " + fmt(ratio, 3) + "x (K-fold data gives " +
                      fmt(expected_ratio, 3) + "x, allowed +-25%); " + timing(elapsed, 60.0)};
}

Outcome inflation_bound() {
    Clock clock;
    const LinearTarget t = linear_target();
    const LinearOperator op(t.A);
    EnkfConfig cfg = linear_config(t, 0);
    cfg.sigma_theta = Eigen::Vector2d(0.02, 0.03);
    const experiments::InflationReport r = experiments::variance_inflation(cfg, op, t.obs, 50, derive_seed(kMasterSeed, 6));
    const double elapsed = clock.seconds();
    const bool nonnegative = r.mean_difference >= -kOracleSe * r.standard_error;
    const bool bounded = r.mean_difference <= r.bound + kOracleSe * r.standard_error;
    const bool pass = nonnegative && bounded && elapsed < 120.0;
    return {pass, "mean trace inflation " + fmt(r.mean_difference, 4) + " +- " + fmt(r.standard_error, 3) +
                      " (bound K tr(s s^T) = " + fmt(r.bound, 4) + " + 3 SE)" +
                      (nonnegative ? "" : ", negative beyond 3 SE") + "; " + timing(elapsed, 120.0)};
}

Outcome emulator_quality(const fs::path& cache) {
    MmsFixture& f = mms_fixture(cache);
    Clock clock;
    const Eigen::VectorXd r2 = experiments::held_out_r2(*f.bank, f.ensemble);
    int meeting = 0;
    Eigen::Index worst = 0;
    for (Eigen::Index j = 0; j < r2.size(); ++j) meeting += r2[j] > kR2Gate;
    r2.minCoeff(&worst);
    std::string detail = std::to_string(meeting) + "/" + std::to_string(r2.size()) + " outputs with held-out R^2 > " +
                         fmt(kR2Gate) + " (min " + fmt(r2[worst]) + " at " + f.bank->labels()[static_cast<std::size_t>(worst)] +
                         ", median " + fmt(median({r2.data(), r2.data() + r2.size()})) + ")";
    if (meeting == r2.size()) return {true, detail};

    // Fallback clause: configurable gate, reported values, monotone learning curve.
    std::cerr << "held-out R^2 per output:";
    for (Eigen::Index j = 0; j < r2.size(); ++j)
        std::cerr << (j % 5 == 0 ? "\n  " : "  ") << f.bank->labels()[static_cast<std::size_t>(j)] << " " << fmt(r2[j]);
    std::cerr << "\n";
    const int n = static_cast<int>(f.ensemble.train_rows.size());
    gp::FitOptions fo;
    fo.restarts = f.config.emulation.restarts;
    fo.max_iterations = f.config.emulation.max_iterations;
    fo.seed = derive_seed(f.config.seed, 3);
    const experiments::LearningCurve curve = experiments::r2_learning_curve(f.ensemble, {n / 4, n / 2}, fo);
    std::vector<double> med{curve.median()[0], curve.median()[1], median({r2.data(), r2.data() + r2.size()})};
    std::vector<double> low{curve.minimum()[0], curve.minimum()[1], r2.minCoeff()};
    const bool monotone = med[0] < med[1] && med[1] < med[2] && low[0] < low[1] && low[1] < low[2];
    detail += "; strict gate not met, configurable-gate fallback: learning curve at " + std::to_string(n / 4) + "/" +
              std::to_string(n / 2) + "/" + std::to_string(n) + " points, median R^2 " + fmt(med[0]) + " / " +
              fmt(med[1]) + " / " + fmt(med[2]) + ", min " + fmt(low[0]) + " / " + fmt(low[1]) + " / " + fmt(low[2]) +
              (monotone ? " (monotone)" : " (NOT monotone)") + "; " + fmt(clock.seconds(), 3) + " s";
    return {monotone, detail};
}

Outcome identifiability(const fs::path& cache) {
    MmsFixture& f = mms_fixture(cache);
    Clock clock;
    experiments::StudyOptions so;
    so.n_cases = 50;
    so.seed = derive_seed(kMasterSeed, 7);
    so.geometry = f.config.model.geometry.build();
    so.protocol = f.config.model.protocol;
    const experiments::StudyReport report = experiments::run_study(so, *f.bank, f.ensemble);
    const double elapsed = clock.seconds();

    bool corr_ok = true;
    std::string corr = "corr(tau_in, D):";
    for (auto s : report.sets) {
        const double a = report.correlation(s, 0), b = report.correlation(s, 4);
        corr_ok = corr_ok && a > kIdentifiableCorr && b > kIdentifiableCorr;
        corr += " " + experiments::to_string(s) + " " + fmt(a, 3) + "/" + fmt(b, 3);
    }
    std::vector<double> apd, s2;
    for (auto s : report.sets) {
        apd.push_back(report.rmse_quantiles(s, mms::OutputType::APD).median);
        s2.push_back(report.rmse_quantiles(s, mms::OutputType::S2).median);
    }
    const bool apd_ok = apd[0] > apd[1] && apd[1] > apd[2];
    const bool s2_ok = s2[0] >= kS2Drop * s2[1];
    const bool pass = corr_ok && apd_ok && s2_ok && elapsed < 1800.0;
    return {pass, "(a) " + corr + (corr_ok ? "" : " [below " + fmt(kIdentifiableCorr) + "]") +
                      "; (b) median APD RMSE " + fmt(apd[0], 3) + " / " + fmt(apd[1], 3) + " / " + fmt(apd[2], 3) +
                      (apd_ok ? " decreasing" : " NOT decreasing") + "; (c) median S2 RMSE " + fmt(s2[0], 3) + " -> " +
                      fmt(s2[1], 3) + " (drop " + fmt(s2[0] / s2[1], 3) + "x, need " + fmt(kS2Drop) + "x); " +
                      std::to_string(report.failed().size()) + " failed runs; " + timing(elapsed, 1800.0)};
}

std::string comparison_text(const experiments::ComparisonReport& c) {
    return "max |z| " + fmt(c.max_abs_z(), 3) + ", z " + vec(c.mean_z, 3) + ", sd ratio " + vec(c.sd_ratio, 3);
}

Outcome enkf_vs_mcmc(const fs::path& cache) {
    MmsFixture& f = mms_fixture(cache);
    Clock clock;

    const ToyProblem toy;
    const gp::EmulatorBank toy_bank = toy.emulator(50, derive_seed(kMasterSeed, 8, 0));
    const ObservationSet toy_obs = toy.observations(derive_seed(kMasterSeed, 8, 1));
    const EnkfConfig toy_enkf = toy.enkf_config(derive_seed(kMasterSeed, 8, 2));
    McmcConfig toy_mcmc;
    toy_mcmc.prior = toy_enkf.initial;
    toy_mcmc.space = toy_enkf.space;
    toy_mcmc.seed = derive_seed(kMasterSeed, 8, 3);
    const auto toy_cmp = experiments::compare_enkf_mcmc(toy_enkf, toy_mcmc, toy_bank, toy_obs);

    const int row = f.ensemble.validation_rows.front();
    const experiments::CalibrationCase cc{row, MeasurementSet::S1S2APD, {}, derive_seed(kMasterSeed, 9, 0)};
    const ObservationSet obs = experiments::make_synthetic_obs(f.ensemble.outputs.row(row).transpose(),
                                                               f.ensemble.labels, cc);
    const gp::EmulatorBank bank = f.bank->select(obs.labels());
    EnkfConfig enkf;
    enkf.space = ParameterSpace::mms();
    enkf.initial = experiments::box_initial_distribution(enkf.space);
    enkf.sigma_theta = EnkfConfig::default_sigma_theta(enkf.space);
    enkf.seed = derive_seed(kMasterSeed, 9, 1);
    McmcConfig mcmc;
    mcmc.prior = enkf.initial;
    mcmc.space = enkf.space;
    mcmc.seed = derive_seed(kMasterSeed, 9, 2);
    const auto mms_cmp = experiments::compare_enkf_mcmc(enkf, mcmc, bank, obs);
    const double elapsed = clock.seconds();

    auto ok = [](const experiments::ComparisonReport& c) {
        return c.max_abs_z() <= kOracleSe && c.max_sd_relative_error() <= kSdRel;
    };
    const bool pass = ok(toy_cmp) && ok(mms_cmp) && elapsed < 600.0;
    return {pass, "toy: " + comparison_text(toy_cmp) + "; mMS (validation member id " +
                      std::to_string(f.ensemble.ids[static_cast<std::size_t>(row)]) + ", S1+S2+APD): " +
                      comparison_text(mms_cmp) + " (limits |z| " + fmt(kOracleSe) + ", sd ratio 1 +- " + fmt(kSdRel) +
                      "); " + timing(elapsed, 600.0)};
}

Outcome robustness() {
    Clock clock;
    const ToyProblem toy;
    const gp::EmulatorBank bank = toy.emulator(50, derive_seed(kMasterSeed, 10, 0));
    const ObservationSet obs = toy.observations(derive_seed(kMasterSeed, 10, 1));
    struct Setting {
        Eigen::Index N;
        int K;
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        Eigen::Vector2d sd = Eigen::Vector2d::Zero();
    };
    std::vector<Setting> settings{{200, 20}, {200, 100}, {500, 20}, {500, 100}};
    const int reps = 20;
    for (std::size_t i = 0; i < settings.size(); ++i) {
        Eigen::MatrixXd means(2, reps);
        for (int r = 0; r < reps; ++r) {
            EnkfConfig cfg = toy.enkf_config(derive_seed(kMasterSeed, 11, r));
            cfg.ensemble_size = settings[i].N;
            cfg.iterations = settings[i].K;
            means.col(r) = run_enkf(cfg, bank, obs).posterior.mean;
        }
        settings[i].mean = means.rowwise().mean();
        settings[i].sd = ((means.colwise() - settings[i].mean).array().square().rowwise().sum() / (reps - 1.0)).sqrt();
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < settings.size(); ++a)
        for (std::size_t b = a + 1; b < settings.size(); ++b)
            for (int j = 0; j < 2; ++j) {
                const double se = std::hypot(settings[a].sd[j], settings[b].sd[j]);
                worst = std::max(worst, std::abs(settings[a].mean[j] - settings[b].mean[j]) / se);
            }
    std::string means;
    for (const auto& s : settings)
        means += " N=" + std::to_string(s.N) + ",K=" + std::to_string(s.K) + " " + vec(s.mean, 5);
    const double elapsed = clock.seconds();
    const bool pass = worst < kRobustSe && elapsed < 300.0;
    return {pass, "largest pairwise difference " + fmt(worst, 3) + " MC standard errors (limit " + fmt(kRobustSe) +
                      ");" + means + "; " + timing(elapsed, 300.0)};
}

Outcome forward_properties() {
    Clock clock;
    using namespace mms;
    const Geometry g = Geometry::cable();
    const PacingProtocol protocol;
    std::vector<std::string> failures;

    // Gate bounds at the box centre and the corners of the gate time constants.
    double h_lo = 1.0, h_hi = 0.0;
    const ParameterSpace space = ParameterSpace::mms();
    std::vector<Eigen::VectorXd> points{space.midpoint()};
    for (int corner = 0; corner < 4; ++corner) {
        Eigen::VectorXd p = space.midpoint();
        p[2] = (corner & 1) ? space.bound(2).hi : space.bound(2).lo;
        p[3] = (corner & 2) ? space.bound(3).hi : space.bound(3).lo;
        points.push_back(p);
    }
    for (const auto& p : points) {
        try {
            const SimulationTrace tr = simulate_tissue(TissueParams::from_vector(p), g, protocol);
            h_lo = std::min(h_lo, tr.h.minCoeff());
            h_hi = std::max(h_hi, tr.h.maxCoeff());
        } catch (const std::exception& e) {
            failures.push_back(std::string("simulation failed: ") + e.what());
        }
    }

    SimulationOptions rest_opt;
    const SimulationTrace rest = simulate_tissue_unforced(TissueParams::from_vector(space.midpoint()), g, 3000.0, rest_opt);
    const double rest_max = rest.v.cwiseAbs().maxCoeff();

    const TissueParams mid = TissueParams::from_vector(space.midpoint());
    SimulationOptions coarse;
    coarse.dt = stable_dt(mid.cell, mid.conductivity, g.dx);
    SimulationOptions fine = coarse;
    fine.dt = coarse.dt / 2.0;
    const BeatMarkers a = s1s2_markers(mid, g, protocol, coarse);
    const BeatMarkers b = s1s2_markers(mid, g, protocol, fine);
    double lat_rel = 0.0;
    for (const auto* pair : {&a.lat_s1, &a.lat_s2}) {
        const Eigen::VectorXd& x = *pair;
        const Eigen::VectorXd& y = pair == &a.lat_s1 ? b.lat_s1 : b.lat_s2;
        if (!x.allFinite() || !y.allFinite()) failures.push_back("missing LAT in the dt refinement run");
        lat_rel = std::max(lat_rel, ((x - y).cwiseAbs().array() / y.cwiseAbs().array()).maxCoeff());
    }

    TissueParams decoupled = mid;
    decoupled.conductivity = 0.0;
    SimulationOptions cell_opt;
    cell_opt.dt = stable_dt(mid.cell, 0.0, g.dx);
    const SimulationTrace tissue = simulate_tissue(decoupled, g, protocol, cell_opt);
    const SimulationTrace cell_on = simulate_cell(mid.cell, protocol, cell_opt.dt);
    PacingProtocol silent = protocol;
    silent.stim_amplitude = 0.0;
    const SimulationTrace cell_off = simulate_cell(mid.cell, silent, cell_opt.dt);
    h_lo = std::min(h_lo, tissue.h.minCoeff());
    h_hi = std::max(h_hi, tissue.h.maxCoeff());
    const std::set<int> stim(g.stim_nodes.begin(), g.stim_nodes.end());
    double cell_err = 0.0;
    for (int node = 0; node < g.node_count(); ++node) {
        const SimulationTrace& ref = stim.count(node) ? cell_on : cell_off;
        cell_err = std::max(cell_err, (tissue.v.row(tissue.row_of(node)) - ref.v.row(0)).cwiseAbs().maxCoeff());
    }

    const double elapsed = clock.seconds();
    const bool gate_ok = h_lo >= 0.0 && h_hi <= 1.0;
    const bool pass = gate_ok && rest_max == 0.0 && lat_rel < kLatDtRel && cell_err <= kCellMatch && failures.empty() &&
                      elapsed < 120.0;
    std::string detail = "h in [" + fmt(h_lo, 3) + ", " + fmt(h_hi, 3) + "] over " + std::to_string(points.size() + 1) +
                         " parameter sets; rest max|v| " + fmt(rest_max) + "; LAT change on halving dt " +
                         fmt(100.0 * lat_rel, 3) + "% (limit " + fmt(100.0 * kLatDtRel) + "%); D=0 vs cell max diff " +
                         fmt(cell_err, 3) + " (limit " + fmt(kCellMatch) + "); " + timing(elapsed, 120.0);
    for (const auto& f : failures) detail += "; " + f;
    return {pass, detail};
}

Outcome calibrate_wall_clock(const fs::path& cache) {
    MmsFixture& f = mms_fixture(cache);
    const fs::path out = cache / "calibrate_timing";
    fs::remove_all(out);
    cli::CommandContext ctx;
    ctx.config = f.config;
    ctx.config.output_dir = out.string();
    ctx.config.emulation.ensemble = (cache / "ensemble").string();
    ctx.config.calibration.bank = (cache / "bank.json").string();
    ctx.config.threads = 1;
    std::ostringstream sink;
    ctx.out = &sink;
    ctx.err = &sink;
    Clock clock;
    const int code = cli::run_command("calibrate", ctx);
    const double elapsed = clock.seconds();
    const bool pass = code == cli::kExitOk && elapsed < kCalibrateSeconds;
    return {pass, "calibrate (p = 45, N = " + std::to_string(ctx.config.calibration.ensemble_size) + ", K = " +
                      std::to_string(ctx.config.calibration.iterations) + ", 1 thread) exit " + std::to_string(code) +
                      " in " + timing(elapsed, kCalibrateSeconds) + (code == cli::kExitOk ? "" : "; " + sink.str())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string cache = "acceptance_cache";
    std::vector<int> only;
    app.add_option("--cache", cache, "Directory holding the cached mMS ensemble and emulator bank");
    app.add_option("--only", only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(cache);

    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const fs::path dir = cache;
    const std::vector<Criterion> criteria{
        {1, "linear-Gaussian oracle", linear_oracle},
        {2, "toy-problem recovery", toy_recovery},
        {3, "perturbation-scaling identity", perturbation_scaling},
        {4, "variance-inflation bound", inflation_bound},
        {5, "emulator quality gate", [&] { return emulator_quality(dir); }},
        {6, "identifiability ordering", [&] { return identifiability(dir); }},
        {7, "EnKF-vs-MCMC agreement", [&] { return enkf_vs_mcmc(dir); }},
        {8, "robustness sweep", robustness},
        {9, "forward-model properties", forward_properties},
        {10, "end-to-end calibrate wall-clock", [&] { return calibrate_wall_clock(dir); }},
    };

    int failed = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        ++ran;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
    }
    std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
