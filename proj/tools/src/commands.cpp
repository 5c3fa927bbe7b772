#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>

#include "gpenkf/design.hpp"
#include "gpenkf/errors.hpp"
#include "gpenkf/experiments.hpp"
#include "gpenkf/gp.hpp"
#include "gpenkf/io.hpp"
#include "gpenkf/random.hpp"
#include "json.hpp"

namespace gpenkf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Bad invocation or missing input; exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Substream indices of the master seed, one per pipeline step.
enum SeedStream : std::uint64_t {
    kSeedClassifier = 1,
    kSeedEnsemble = 2,
    kSeedEmulator = 3,
    kSeedObservation = 4,
    kSeedEnkf = 5,
    kSeedMcmc = 6,
    kSeedStudy = 7,
};

constexpr const char* kRunSuffix = ".run.json";

std::ostream& out(const CommandContext& ctx) { return *ctx.out; }

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::is_regular_file(p)) throw UsageError("missing " + what + ": " + p.string());
}

class RunRecorder {
public:
    RunRecorder(const CommandContext& ctx, std::string command)
        : cfg_(ctx.config), command_(std::move(command)), hash_(config_hash(cfg_)) {}

    io::Metadata meta() const {
        return {{"command", command_},
                {"config_hash", hash_},
                {"mode", to_string(cfg_.mode)},
                {"seed", std::to_string(cfg_.seed)}};
    }

    void write(const std::string& relative, const std::string& content) {
        io::write_text(fs::path(cfg_.output_dir) / relative, content);
        files_.push_back({relative, sha256_hex(content)});
    }

    void finish() {
        json o;
        json m = json::object();
        for (const auto& [k, v] : meta()) m[k] = v;
        o["meta"] = std::move(m);
        json files = json::array();
        for (const auto& [path, digest] : files_) files.push_back({{"path", path}, {"sha256", digest}});
        o["files"] = std::move(files);
        io::write_text(fs::path(cfg_.output_dir) / (command_ + kRunSuffix), o.dump(2) + "\n");
    }

private:
    const RunConfig& cfg_;
    std::string command_;
    std::string hash_;
    std::vector<std::pair<std::string, std::string>> files_;
};

mms::SimulationOptions simulation_options(const RunConfig& cfg) {
    mms::SimulationOptions o;
    o.dt = cfg.model.dt;
    return o;
}

experiments::ToyProblem toy_problem(const RunConfig& cfg) {
    experiments::ToyProblem toy;
    toy.truth = Eigen::Vector2d(cfg.toy.truth[0], cfg.toy.truth[1]);
    toy.locations = Eigen::Map<const Eigen::VectorXd>(cfg.toy.locations.data(),
                                                      static_cast<Eigen::Index>(cfg.toy.locations.size()));
    toy.noise_sd = cfg.toy.noise_sd;
    return toy;
}

ParameterSpace space_of(const RunConfig& cfg) {
    return cfg.mode == Mode::Toy ? ParameterSpace::toy() : ParameterSpace::mms();
}

EnkfConfig enkf_config(const RunConfig& cfg) {
    EnkfConfig e;
    const auto& c = cfg.calibration;
    e.space = space_of(cfg);
    e.ensemble_size = c.ensemble_size;
    e.iterations = c.iterations;
    if (cfg.mode == Mode::Toy) {
        e.initial = {Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
        e.sigma_theta = Eigen::Vector2d::Constant(cfg.toy.sigma_theta);
    } else {
        e.initial = experiments::box_initial_distribution(e.space);
        e.sigma_theta = EnkfConfig::default_sigma_theta(e.space);
    }
    if (c.sigma_theta) {
        if (static_cast<Eigen::Index>(c.sigma_theta->size()) != e.space.dim())
            throw UsageError("calibration.sigma_theta needs " + std::to_string(e.space.dim()) + " entries");
        e.sigma_theta = Eigen::Map<const Eigen::VectorXd>(c.sigma_theta->data(), e.space.dim());
    }
    e.seed = derive_seed(cfg.seed, kSeedEnkf);
    e.noise_scaling = c.noise_scaling;
    e.perturbation = c.perturbation;
    e.threads = cfg.threads;
    return e;
}

McmcConfig mcmc_config(const RunConfig& cfg) {
    const EnkfConfig e = enkf_config(cfg);
    McmcConfig m;
    m.n_chains = cfg.mcmc.chains;
    m.n_samples = cfg.mcmc.samples;
    m.burn_in = cfg.mcmc.burn_in;
    m.thin = cfg.mcmc.thin;
    m.proposal = cfg.mcmc.proposal;
    m.target_acceptance = cfg.mcmc.target_acceptance;
    m.anneal_fraction = cfg.mcmc.anneal_fraction;
    m.reset_outliers = cfg.mcmc.reset_outliers;
    m.prior = e.initial;
    m.space = e.space;
    m.seed = derive_seed(cfg.seed, kSeedMcmc);
    return m;
}

struct EnsemblePaths {
    fs::path params, outputs, manifest;
};

EnsemblePaths ensemble_paths(const std::string& dir) {
    return {fs::path(dir) / "params.csv", fs::path(dir) / "outputs.csv", fs::path(dir) / "manifest.json"};
}

void require_ensemble(const std::string& dir) {
    const auto p = ensemble_paths(dir);
    require_file(p.params, "ensemble parameter file");
    require_file(p.outputs, "ensemble output file");
    require_file(p.manifest, "ensemble manifest");
}

design::TrainingEnsemble load_ensemble(const std::string& dir) {
    require_ensemble(dir);
    const auto p = ensemble_paths(dir);
    return io::training_ensemble_from_files(io::table_from_csv(io::read_text(p.params)),
                                            io::table_from_csv(io::read_text(p.outputs)),
                                            io::read_text(p.manifest));
}

design::TrainingEnsemble toy_ensemble(const RunConfig& cfg) {
    const experiments::ToyProblem toy = toy_problem(cfg);
    const ParameterSpace space = ParameterSpace::toy();
    const int n = cfg.toy.training_points;
    const int m = cfg.toy.test_points;
    const auto train = design::lhs_sample(n, space, derive_seed(cfg.seed, kSeedClassifier), 100);
    const auto test = design::lhs_sample(m, space, derive_seed(cfg.seed, kSeedEnsemble), 1);

    design::TrainingEnsemble e;
    e.space = space;
    e.labels = toy.labels();
    e.params.resize(n + m, 2);
    e.params << train.points, test.points;
    e.outputs.resize(n + m, toy.locations.size());
    for (int i = 0; i < n + m; ++i) {
        e.outputs.row(i) = toy.outputs(e.params.row(i).transpose()).transpose();
        e.ids.push_back(i);
        e.points.push_back({i, e.params.row(i).transpose(), design::PointStatus::Accepted, 1.0, ""});
        (i < n ? e.train_rows : e.validation_rows).push_back(i);
    }
    return e;
}

ObservationSet calibration_observations(const RunConfig& cfg, json& provenance) {
    const auto& c = cfg.calibration;
    if (!c.observations.empty()) {
        require_file(c.observations, "observation file");
        provenance = {{"source", "file"}, {"path", c.observations}};
        return io::observations_from_json(io::read_text(c.observations));
    }
    const std::uint64_t noise_seed = derive_seed(cfg.seed, kSeedObservation);
    if (cfg.mode == Mode::Toy) {
        const auto toy = toy_problem(cfg);
        provenance = {{"source", "synthetic"}, {"truth", cfg.toy.truth}};
        return toy.observations(noise_seed);
    }
    const auto ensemble = load_ensemble(cfg.calibration_ensemble_dir());
    if (c.truth_index >= static_cast<int>(ensemble.validation_rows.size()))
        throw UsageError("calibration.truth_index " + std::to_string(c.truth_index) + " exceeds the " +
                         std::to_string(ensemble.validation_rows.size()) + " validation members");
    const int row = ensemble.validation_rows[static_cast<std::size_t>(c.truth_index)];
    const experiments::CalibrationCase cc{row, c.measurement_set, c.noise, noise_seed};
    const Eigen::VectorXd truth = ensemble.params.row(row).transpose();
    provenance = {{"source", "synthetic"},
                  {"truth_id", ensemble.ids[static_cast<std::size_t>(row)]},
                  {"truth", std::vector<double>(truth.data(), truth.data() + truth.size())},
                  {"measurement_set", experiments::to_string(c.measurement_set)}};
    return experiments::make_synthetic_obs(ensemble.outputs.row(row).transpose(), ensemble.labels, cc);
}

}  // namespace

int cmd_design(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.config;
    if (cfg.mode == Mode::Mms) {
        cfg.model.geometry.build().validate();
        cfg.model.protocol.validate();
    }
    const std::string dir = "ensemble";
    if (ctx.dry_run) {
        out(ctx) << "design (" << to_string(cfg.mode) << "): configuration valid; would write "
                 << (fs::path(cfg.output_dir) / dir).string() << "\n";
        return kExitOk;
    }
    RunRecorder rec(ctx, "design");
    design::TrainingEnsemble ensemble;
    json extra = json::object();
    if (cfg.mode == Mode::Toy) {
        ensemble = toy_ensemble(cfg);
        extra = {{"training_points", cfg.toy.training_points}, {"test_points", cfg.toy.test_points}};
    } else {
        design::CellTrainingOptions co;
        co.samples = cfg.design.classifier_samples;
        co.holdout_fraction = cfg.design.classifier_holdout;
        co.seed = derive_seed(cfg.seed, kSeedClassifier);
        co.lhs_restarts = cfg.design.classifier_lhs_restarts;
        co.protocol = cfg.model.protocol;
        co.classifier.learning_rate = cfg.design.classifier_learning_rate;
        co.classifier.max_iterations = cfg.design.classifier_max_iterations;
        co.margin = cfg.design.classifier_margin;
        co.threads = cfg.threads;
        out(ctx) << "training cell classifier on " << co.samples << " samples\n";
        const auto report = design::train_cell_classifier(co);
        out(ctx) << "  training accuracy " << report.training_accuracy << ", holdout accuracy "
                 << report.holdout_accuracy << "\n";

        design::EnsembleOptions eo;
        eo.initial_size = cfg.design.initial_size;
        eo.seed = derive_seed(cfg.seed, kSeedEnsemble);
        eo.lhs_restarts = cfg.design.lhs_restarts;
        eo.train_fraction = cfg.design.train_fraction;
        eo.geometry = cfg.model.geometry.build();
        eo.protocol = cfg.model.protocol;
        eo.simulation = simulation_options(cfg);
        eo.threads = cfg.threads;
        out(ctx) << "simulating " << eo.initial_size << "-point design\n";
        ensemble = design::build_ensemble(eo, report.classifier);

        const auto& c = report.classifier;
        extra = {{"classifier",
                  {{"weights", std::vector<double>(c.weights.data(), c.weights.data() + c.weights.size())},
                   {"intercept", c.intercept},
                   {"input_mean", std::vector<double>(c.input_mean.data(), c.input_mean.data() + c.input_mean.size())},
                   {"input_scale",
                    std::vector<double>(c.input_scale.data(), c.input_scale.data() + c.input_scale.size())},
                   {"threshold", c.threshold},
                   {"margin", c.margin},
                   {"training_accuracy", report.training_accuracy},
                   {"holdout_accuracy", report.holdout_accuracy},
                   {"samples", co.samples},
                   {"feasible", std::count(report.labels.begin(), report.labels.end(), true)}}}};
    }
    const auto files = io::training_ensemble_files(ensemble, rec.meta(), extra.dump());
    rec.write(dir + "/params.csv", io::table_to_csv(files.params));
    rec.write(dir + "/outputs.csv", io::table_to_csv(files.outputs));
    rec.write(dir + "/manifest.json", files.manifest);
    rec.finish();
    out(ctx) << "design: " << ensemble.points.size() << " initial points, " << ensemble.size() << " survivors ("
             << ensemble.train_rows.size() << " train, " << ensemble.validation_rows.size() << " validation)\n";
    return kExitOk;
}

int cmd_emulate(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.config;
    const std::string dir = cfg.ensemble_dir();
    require_ensemble(dir);
    if (ctx.dry_run) {
        out(ctx) << "emulate: configuration valid; ensemble found in " << dir << "\n";
        return kExitOk;
    }
    const auto ensemble = load_ensemble(dir);
    gp::FitOptions fo;
    fo.restarts = cfg.emulation.restarts;
    fo.max_iterations = cfg.emulation.max_iterations;
    fo.seed = derive_seed(cfg.seed, kSeedEmulator);
    out(ctx) << "fitting " << ensemble.labels.size() << " emulators on " << ensemble.train_rows.size()
             << " training points\n";
    const auto bank =
        gp::EmulatorBank::fit(ensemble.rows_of(ensemble.params, ensemble.train_rows),
                              ensemble.rows_of(ensemble.outputs, ensemble.train_rows), ensemble.labels, fo, cfg.threads);
    const Eigen::VectorXd r2 = experiments::held_out_r2(bank, ensemble);

    RunRecorder rec(ctx, "emulate");
    json report;
    json m = json::object();
    for (const auto& [k, v] : rec.meta()) m[k] = v;
    report["meta"] = std::move(m);
    report["r2_floor"] = cfg.emulation.r2_floor;
    report["training_size"] = ensemble.train_rows.size();
    report["validation_size"] = ensemble.validation_rows.size();
    json outputs = json::array();
    std::vector<std::string> below;
    for (std::size_t j = 0; j < ensemble.labels.size(); ++j) {
        const auto& e = bank[j];
        const auto& hp = e.hyperparameters();
        const double value = r2[static_cast<Eigen::Index>(j)];
        if (!(value >= cfg.emulation.r2_floor)) below.push_back(ensemble.labels[j]);
        outputs.push_back({{"label", ensemble.labels[j]},
                           {"r2", value},
                           {"signal_variance", e.signal_variance()},
                           {"noise_variance", e.noise_variance()},
                           {"lengthscales", std::vector<double>(hp.lengthscales.data(),
                                                                hp.lengthscales.data() + hp.lengthscales.size())}});
    }
    report["outputs"] = std::move(outputs);
    report["min_r2"] = r2.minCoeff();
    report["below_floor"] = below;
    rec.write("bank.json", io::bank_to_json(bank, rec.meta()));
    rec.write("emulation.json", report.dump(2) + "\n");
    rec.finish();

    out(ctx) << "held-out R^2:\n";
    for (std::size_t j = 0; j < ensemble.labels.size(); ++j)
        out(ctx) << "  " << std::left << std::setw(8) << ensemble.labels[j] << std::fixed << std::setprecision(4)
                 << r2[static_cast<Eigen::Index>(j)] << std::defaultfloat << "\n";
    if (!below.empty()) {
        *ctx.err << "emulate: " << below.size() << " of " << ensemble.labels.size() << " outputs below R^2 floor "
                 << cfg.emulation.r2_floor << " (min " << r2.minCoeff() << ")\n";
        return kExitEmulation;
    }
    return kExitOk;
}

int cmd_calibrate(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.config;
    require_file(cfg.bank_path(), "emulator bank");
    if (cfg.mode == Mode::Mms && cfg.calibration.observations.empty()) require_ensemble(cfg.calibration_ensemble_dir());
    const EnkfConfig ec = enkf_config(cfg);
    ec.validate();
    if (ctx.dry_run) {
        out(ctx) << "calibrate: configuration valid; bank " << cfg.bank_path() << "\n";
        return kExitOk;
    }
    json provenance;
    const ObservationSet obs = calibration_observations(cfg, provenance);
    const auto bank = io::bank_from_json(io::read_text(cfg.bank_path())).select(obs.labels());
    const EnkfResult result = run_enkf(ec, bank, obs);

    RunRecorder rec(ctx, "calibrate");
    auto meta = rec.meta();
    meta.emplace_back("observations", provenance.dump());
    const auto& names = ec.space.names();
    rec.write("observations.json", io::observations_to_json(obs, meta));
    rec.write("enkf.json", io::enkf_result_to_json(result, names, meta));
    rec.write("posterior.json", io::gaussian_to_json(result.posterior, names, meta));
    rec.write("final_ensemble.csv", io::table_to_csv(io::ensemble_table(result.final_ensemble, meta)));
    rec.finish();

    out(ctx) << "calibrate: p = " << obs.size() << ", N = " << ec.ensemble_size << ", K = " << ec.iterations << "\n";
    for (Eigen::Index j = 0; j < ec.space.dim(); ++j)
        out(ctx) << "  " << std::left << std::setw(10) << names[static_cast<std::size_t>(j)] << " mean "
                 << std::setprecision(6) << result.posterior.mean[j] << "  sd "
                 << std::sqrt(result.posterior.covariance(j, j)) << "\n";
    return kExitOk;
}

int cmd_mcmc(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.config;
    require_file(cfg.bank_path(), "emulator bank");
    if (cfg.mode == Mode::Mms && cfg.calibration.observations.empty()) require_ensemble(cfg.calibration_ensemble_dir());
    const McmcConfig mc = mcmc_config(cfg);
    mc.validate();
    if (ctx.dry_run) {
        out(ctx) << "mcmc: configuration valid; bank " << cfg.bank_path() << "\n";
        return kExitOk;
    }
    json provenance;
    const ObservationSet obs = calibration_observations(cfg, provenance);
    const auto bank = io::bank_from_json(io::read_text(cfg.bank_path())).select(obs.labels());
    const McmcResult result = run_mcmc(mc, bank, obs);

    RunRecorder rec(ctx, "mcmc");
    auto meta = rec.meta();
    meta.emplace_back("observations", provenance.dump());
    const auto& names = mc.space.names();
    io::Table samples;
    samples.meta = meta;
    samples.header = {"chain"};
    for (const auto& n : names) samples.header.push_back(n);
    samples.values.resize(result.samples.rows(), 1 + result.samples.cols());
    const Eigen::Index per_chain = mc.kept_per_chain();
    for (Eigen::Index i = 0; i < result.samples.rows(); ++i) {
        samples.values(i, 0) = static_cast<double>(per_chain > 0 ? i / per_chain : 0);
        samples.values.row(i).tail(result.samples.cols()) = result.samples.row(i);
    }
    rec.write("mcmc.json", io::mcmc_diagnostics_to_json(result, names, meta));
    rec.write("mcmc_samples.csv", io::table_to_csv(samples));
    rec.finish();

    const GaussianSummary s = result.summary();
    out(ctx) << "mcmc: " << result.samples.rows() << " pooled draws from " << mc.n_chains << " chains\n";
    for (Eigen::Index j = 0; j < s.dim(); ++j)
        out(ctx) << "  " << std::left << std::setw(10) << names[static_cast<std::size_t>(j)] << " mean "
                 << std::setprecision(6) << s.mean[j] << "  sd " << std::sqrt(s.covariance(j, j)) << "  R-hat "
                 << result.rhat[j] << "\n";
    for (const auto& w : result.warnings) *ctx.err << "warning: " << w << "\n";
    return kExitOk;
}

int cmd_study(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.config;
    if (cfg.mode != Mode::Mms) throw UsageError("the study command needs mode \"mms\"");
    require_file(cfg.bank_path(), "emulator bank");
    require_ensemble(cfg.calibration_ensemble_dir());
    const EnkfConfig ec = enkf_config(cfg);
    ec.validate();
    if (ctx.dry_run) {
        out(ctx) << "study: configuration valid; " << cfg.study.cases << " cases x " << cfg.study.sets.size()
                 << " measurement sets\n";
        return kExitOk;
    }
    const auto ensemble = load_ensemble(cfg.calibration_ensemble_dir());
    const auto bank = io::bank_from_json(io::read_text(cfg.bank_path()));

    experiments::StudyOptions so;
    so.n_cases = cfg.study.cases;
    so.sets = cfg.study.sets;
    so.noise = cfg.calibration.noise;
    so.seed = derive_seed(cfg.seed, kSeedStudy);
    so.ensemble_size = ec.ensemble_size;
    so.iterations = ec.iterations;
    so.sigma_theta = ec.sigma_theta;
    so.initial = ec.initial;
    so.geometry = cfg.model.geometry.build();
    so.protocol = cfg.model.protocol;
    so.simulation = simulation_options(cfg);
    so.threads = cfg.threads;
    out(ctx) << "study: " << so.n_cases << " cases x " << so.sets.size() << " measurement sets\n";
    const auto report = experiments::run_study(so, bank, ensemble);

    RunRecorder rec(ctx, "study");
    rec.write("study.json", experiments::study_json(report, rec.meta()));
    rec.write("study_scatter.csv", io::table_to_csv(experiments::scatter_table(report, rec.meta())));
    rec.write("study_rmse.csv", io::table_to_csv(experiments::rmse_table(report, rec.meta())));
    rec.finish();

    for (auto s : report.sets) {
        out(ctx) << "  " << std::left << std::setw(10) << experiments::to_string(s) << " corr";
        for (std::size_t j = 0; j < report.parameter_names.size(); ++j)
            out(ctx) << " " << report.parameter_names[j] << "=" << std::setprecision(3)
                     << report.correlation(s, static_cast<Eigen::Index>(j));
        out(ctx) << "  median RMSE";
        for (auto t : mms::kOutputTypes)
            out(ctx) << " " << mms::to_string(t) << "=" << std::setprecision(4) << report.rmse_quantiles(s, t).median;
        out(ctx) << "\n";
    }
    const auto failed = report.failed();
    if (!failed.empty()) {
        *ctx.err << "study: " << failed.size() << " failed case(s):\n";
        for (const auto* c : failed)
            *ctx.err << "  case " << c->case_index << " " << experiments::to_string(c->calibration.measurement_set)
                     << ": " << c->error << "\n";
    }
    return kExitOk;
}

int cmd_verify(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.config;
    const std::string expected = config_hash(cfg);
    if (!fs::is_directory(cfg.output_dir)) throw UsageError("output directory not found: " + cfg.output_dir);
    std::vector<fs::path> records;
    for (const auto& entry : fs::directory_iterator(cfg.output_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > std::string(kRunSuffix).size() && name.ends_with(kRunSuffix)) records.push_back(entry.path());
    }
    std::sort(records.begin(), records.end());
    if (records.empty()) throw UsageError("no run records in " + cfg.output_dir);

    int problems = 0;
    auto problem = [&](const std::string& what) {
        ++problems;
        *ctx.err << "verify: " << what << "\n";
    };
    for (const auto& path : records) {
        const json rec = json::parse(io::read_text(path));
        const std::string hash = rec.at("meta").at("config_hash").get<std::string>();
        if (hash != expected) problem(path.filename().string() + ": config hash " + hash + " != " + expected);
        for (const auto& f : rec.at("files")) {
            const fs::path file = fs::path(cfg.output_dir) / f.at("path").get<std::string>();
            if (!fs::is_regular_file(file)) {
                problem(file.string() + ": missing");
                continue;
            }
            if (sha256_hex(io::read_text(file)) != f.at("sha256").get<std::string>())
                problem(file.string() + ": content hash mismatch");
            std::string embedded;
            for (const auto& [k, v] : io::read_metadata(file))
                if (k == "config_hash") embedded = v;
            if (embedded != expected) problem(file.string() + ": embedded config hash '" + embedded + "' != " + expected);
            else out(ctx) << "  ok " << file.string() << "\n";
        }
    }
    if (problems) {
        *ctx.err << "verify: " << problems << " problem(s)\n";
        return kExitUsage;
    }
    out(ctx) << "verify: all files match config hash " << expected << "\n";
    return kExitOk;
}

int run_command(const std::string& name, const CommandContext& ctx) {
    static const std::map<std::string, std::pair<int (*)(const CommandContext&), int>> commands{
        {"design", {cmd_design, kExitDesign}},
        {"emulate", {cmd_emulate, kExitEmulation}},
        {"calibrate", {cmd_calibrate, kExitCalibration}},
        {"mcmc", {cmd_mcmc, kExitCalibration}},
        {"study", {cmd_study, kExitCalibration}},
        {"verify", {cmd_verify, kExitUsage}},
    };
    const auto it = commands.find(name);
    if (it == commands.end()) {
        *ctx.err << "error: unknown command '" << name << "'\n";
        return kExitUsage;
    }
    const auto [fn, failure_code] = it->second;
    try {
        return fn(ctx);
    } catch (const ConfigError& e) {
        *ctx.err << "ConfigError: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        *ctx.err << "UsageError: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        *ctx.err << "FormatError: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        *ctx.err << e.kind() << ": " << e.what() << "\n";
        return failure_code;
    } catch (const std::exception& e) {
        *ctx.err << "error: " << e.what() << "\n";
        return failure_code;
    }
}

}  // namespace gpenkf::cli
