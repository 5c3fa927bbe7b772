#include "gpenkf/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

#include "gpenkf/errors.hpp"

namespace gpenkf::io {

using nlohmann::json;

namespace {

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? json(v[i]) : json(nullptr));
    return a;
}

json mat_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
    return a;
}

Eigen::VectorXd json_vec(const json& a) {
    if (!a.is_array()) throw FormatError("expected a JSON array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].is_null()) v[static_cast<Eigen::Index>(i)] = std::numeric_limits<double>::quiet_NaN();
        else if (a[i].is_number()) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
        else throw FormatError("expected a number in JSON array");
    }
    return v;
}

Eigen::MatrixXd json_mat(const json& a, Eigen::Index cols_if_empty = 0) {
    if (!a.is_array()) throw FormatError("expected a JSON array of rows");
    if (a.empty()) return Eigen::MatrixXd(0, cols_if_empty);
    const auto cols = static_cast<Eigen::Index>(a[0].size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), cols);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Eigen::VectorXd row = json_vec(a[i]);
        if (row.size() != cols) throw FormatError("ragged matrix in JSON");
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

json meta_json(const Metadata& meta) {
    json o = json::object();
    for (const auto& [k, v] : meta) o[k] = v;
    return o;
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("invalid JSON: ") + e.what());
    }
}

template <typename T>
T get(const json& o, const char* key) {
    if (!o.contains(key)) throw FormatError(std::string("missing key '") + key + "'");
    try {
        return o.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad value for '") + key + "': " + e.what());
    }
}

const json& at(const json& o, const char* key) {
    if (!o.is_object() || !o.contains(key)) throw FormatError(std::string("missing key '") + key + "'");
    return o.at(key);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
    if (s == "nan" || s == "NaN" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw FormatError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
    return v;
}

}  // namespace

Eigen::Index Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<Eigen::Index>(i);
    throw FormatError("missing column '" + name + "'");
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string table_to_csv(const Table& t) {
    if (static_cast<Eigen::Index>(t.header.size()) != t.values.cols())
        throw DimensionMismatch("table header and column count differ");
    std::ostringstream out;
    for (const auto& [k, v] : t.meta) out << "# " << k << '=' << v << '\n';
    for (std::size_t j = 0; j < t.header.size(); ++j) out << (j ? "," : "") << t.header[j];
    out << '\n';
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.values.cols(); ++j) out << (j ? "," : "") << format_double(t.values(i, j));
        out << '\n';
    }
    return out.str();
}

Table table_from_csv(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string body = line.substr(line.find_first_not_of("# "));
            const auto eq = body.find('=');
            if (eq == std::string::npos) throw FormatError("line " + std::to_string(line_no) + ": metadata needs key=value");
            t.meta.emplace_back(body.substr(0, eq), body.substr(eq + 1));
            continue;
        }
        if (t.header.empty()) {
            t.header = split(line, ',');
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != t.header.size())
            throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                              " fields, found " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_double(c, line_no));
        rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw FormatError("CSV has no header line");
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw InvalidArgument("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Table ensemble_table(const Ensemble& e, const Metadata& meta) {
    Table t{meta, e.space().names(), e.members().transpose()};
    t.meta.emplace_back("iteration", std::to_string(e.iteration()));
    t.meta.emplace_back("rng_seed", std::to_string(e.rng_seed()));
    return t;
}

Ensemble ensemble_from_table(const Table& t, const ParameterSpace& space) {
    Eigen::MatrixXd members(space.dim(), t.values.rows());
    for (Eigen::Index i = 0; i < space.dim(); ++i)
        members.row(i) = t.values.col(t.column(space.names()[static_cast<std::size_t>(i)])).transpose();
    std::size_t iteration = 0;
    std::uint64_t seed = 0;
    for (const auto& [k, v] : t.meta) {
        if (k == "iteration") iteration = std::stoul(v);
        if (k == "rng_seed") seed = std::stoull(v);
    }
    return {space, std::move(members), iteration, seed};
}

std::string gaussian_to_json(const GaussianSummary& g, const std::vector<std::string>& names, const Metadata& meta) {
    json o;
    o["meta"] = meta_json(meta);
    o["names"] = names;
    o["mean"] = vec_json(g.mean);
    o["covariance"] = mat_json(g.covariance);
    return o.dump(2) + "\n";
}

std::string observations_to_json(const ObservationSet& obs, const Metadata& meta) {
    json o;
    o["meta"] = meta_json(meta);
    o["labels"] = obs.labels();
    o["y"] = vec_json(obs.y());
    o["noise_cov"] = mat_json(obs.noise_cov());
    return o.dump(2) + "\n";
}

ObservationSet observations_from_json(const std::string& text) {
    const json o = parse(text);
    const Eigen::VectorXd y = json_vec(at(o, "y"));
    Eigen::MatrixXd R;
    if (o.contains("noise_cov")) {
        R = json_mat(at(o, "noise_cov"));
    } else {
        const Eigen::VectorXd sd = json_vec(at(o, "noise_sd"));
        R = sd.array().square().matrix().asDiagonal();
    }
    return {y, R, get<std::vector<std::string>>(o, "labels")};
}

GaussianSummary gaussian_from_json(const std::string& text) {
    const json o = parse(text);
    GaussianSummary g{json_vec(at(o, "mean")), json_mat(at(o, "covariance"))};
    g.validate();
    return g;
}

std::string bank_to_json(const gp::EmulatorBank& bank, const Metadata& meta) {
    json o;
    o["schema_version"] = kBankSchemaVersion;
    o["meta"] = meta_json(meta);
    o["labels"] = bank.labels();
    json ems = json::array();
    for (const auto& em : bank.emulators()) {
        json e;
        const auto& s = em.scaling();
        e["scaling"] = {{"input_mean", vec_json(s.input_mean)},
                        {"input_scale", vec_json(s.input_scale)},
                        {"output_mean", s.output_mean},
                        {"output_scale", s.output_scale}};
        const auto& hp = em.hyperparameters();
        e["hyperparameters"] = {{"signal_variance", hp.signal_variance},
                                {"lengthscales", vec_json(hp.lengthscales)},
                                {"noise_variance", hp.noise_variance}};
        e["mean_coeffs"] = vec_json(em.mean_coeffs());
        e["X"] = mat_json(em.training_inputs());
        e["y"] = vec_json(em.training_targets());
        e["warnings"] = em.warnings();
        ems.push_back(std::move(e));
    }
    o["emulators"] = std::move(ems);
    return o.dump() + "\n";
}

gp::EmulatorBank bank_from_json(const std::string& text) {
    const json o = parse(text);
    const int version = get<int>(o, "schema_version");
    if (version != kBankSchemaVersion)
        throw FormatError("unsupported emulator bank schema_version " + std::to_string(version));
    auto labels = get<std::vector<std::string>>(o, "labels");
    const json& ems = at(o, "emulators");
    if (!ems.is_array() || ems.size() != labels.size()) throw FormatError("one emulator per label required");
    std::vector<gp::EmulatorModel> models;
    for (const auto& e : ems) {
        const json& s = at(e, "scaling");
        gp::Standardization scaling{json_vec(at(s, "input_mean")), json_vec(at(s, "input_scale")),
                                    get<double>(s, "output_mean"), get<double>(s, "output_scale")};
        const json& h = at(e, "hyperparameters");
        gp::Hyperparameters hp{get<double>(h, "signal_variance"), json_vec(at(h, "lengthscales")),
                               get<double>(h, "noise_variance")};
        models.push_back(gp::EmulatorModel::condition(json_mat(at(e, "X")), json_vec(at(e, "y")), hp,
                                                      json_vec(at(e, "mean_coeffs")), scaling));
    }
    return {std::move(labels), std::move(models)};
}

Table trace_table(const mms::SimulationTrace& trace, const Metadata& meta) {
    Table t;
    t.meta = meta;
    t.header.push_back("time");
    for (int n : trace.nodes) t.header.push_back("v@" + std::to_string(n));
    const auto samples = static_cast<Eigen::Index>(trace.times.size());
    t.values.resize(samples, static_cast<Eigen::Index>(t.header.size()));
    for (Eigen::Index s = 0; s < samples; ++s) {
        t.values(s, 0) = trace.times[static_cast<std::size_t>(s)];
        t.values.row(s).tail(trace.v.rows()) = trace.v.col(s).transpose();
    }
    return t;
}

Table markers_table(const mms::BeatMarkers& markers, const mms::Geometry& geometry, const Metadata& meta) {
    Table t{meta, {"node", "x", "lat_s1", "lat_s2", "apd_s2", "capture_s1", "capture_s2"}, {}};
    const auto n = static_cast<Eigen::Index>(markers.nodes.size());
    t.values.resize(n, 7);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int node = markers.nodes[static_cast<std::size_t>(i)];
        t.values.row(i) << node, geometry.x_of(node), markers.lat_s1[i], markers.lat_s2[i], markers.apd_s2[i],
            markers.capture[static_cast<std::size_t>(i)][0] ? 1.0 : 0.0,
            markers.capture[static_cast<std::size_t>(i)][1] ? 1.0 : 0.0;
    }
    return t;
}

EnsembleFiles training_ensemble_files(const design::TrainingEnsemble& e, const Metadata& meta,
                                      const std::string& extra_manifest_json) {
    EnsembleFiles f;
    const auto n = e.size();
    f.params.meta = meta;
    f.params.header = {"id"};
    for (const auto& name : e.space.names()) f.params.header.push_back(name);
    f.params.values.resize(n, 1 + e.params.cols());
    f.outputs.meta = meta;
    f.outputs.header = {"id"};
    for (const auto& l : e.labels) f.outputs.header.push_back(l);
    f.outputs.values.resize(n, 1 + e.outputs.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double id = e.ids[static_cast<std::size_t>(i)];
        f.params.values(i, 0) = id;
        f.params.values.row(i).tail(e.params.cols()) = e.params.row(i);
        f.outputs.values(i, 0) = id;
        f.outputs.values.row(i).tail(e.outputs.cols()) = e.outputs.row(i);
    }

    json m;
    m["meta"] = meta_json(meta);
    m["design"] = parse(extra_manifest_json);
    json space = json::array();
    for (Eigen::Index j = 0; j < e.space.dim(); ++j) {
        const Bound& b = e.space.bound(j);
        space.push_back({{"name", e.space.names()[static_cast<std::size_t>(j)]},
                         {"lo", std::isfinite(b.lo) ? json(b.lo) : json(nullptr)},
                         {"hi", std::isfinite(b.hi) ? json(b.hi) : json(nullptr)}});
    }
    m["space"] = std::move(space);
    m["initial_size"] = e.points.size();
    m["survivors"] = n;
    std::map<std::string, int> counts;
    json pts = json::array();
    for (const auto& p : e.points) {
        counts[design::to_string(p.status)]++;
        pts.push_back({{"id", p.id},
                       {"params", vec_json(p.params)},
                       {"status", design::to_string(p.status)},
                       {"probability", p.probability},
                       {"reason", p.reason}});
    }
    m["status_counts"] = counts;
    m["points"] = std::move(pts);
    std::vector<int> train_ids, validation_ids;
    for (int r : e.train_rows) train_ids.push_back(e.ids[static_cast<std::size_t>(r)]);
    for (int r : e.validation_rows) validation_ids.push_back(e.ids[static_cast<std::size_t>(r)]);
    m["train_ids"] = train_ids;
    m["validation_ids"] = validation_ids;
    f.manifest = m.dump(2) + "\n";
    return f;
}

design::TrainingEnsemble training_ensemble_from_files(const Table& params, const Table& outputs,
                                                      const std::string& manifest) {
    design::TrainingEnsemble e;
    const json m = parse(manifest);
    if (m.contains("space")) {
        std::vector<std::string> names;
        std::vector<Bound> bounds;
        for (const auto& b : m.at("space")) {
            names.push_back(get<std::string>(b, "name"));
            Bound bound;
            if (!at(b, "lo").is_null()) bound.lo = get<double>(b, "lo");
            if (!at(b, "hi").is_null()) bound.hi = get<double>(b, "hi");
            bounds.push_back(bound);
        }
        e.space = ParameterSpace(std::move(names), std::move(bounds));
    } else {
        e.space = ParameterSpace::mms();
    }
    if (params.values.rows() != outputs.values.rows()) throw FormatError("parameter and output tables differ in length");
    const Eigen::Index n = params.values.rows();
    const Eigen::Index id_col = params.column("id");
    const Eigen::Index out_id_col = outputs.column("id");
    e.params.resize(n, e.space.dim());
    for (Eigen::Index j = 0; j < e.space.dim(); ++j)
        e.params.col(j) = params.values.col(params.column(e.space.names()[static_cast<std::size_t>(j)]));
    for (std::size_t j = 0; j < outputs.header.size(); ++j)
        if (static_cast<Eigen::Index>(j) != out_id_col) e.labels.push_back(outputs.header[j]);
    e.outputs.resize(n, static_cast<Eigen::Index>(e.labels.size()));
    std::map<int, Eigen::Index> row_of_id;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int id = static_cast<int>(params.values(i, id_col));
        if (static_cast<int>(outputs.values(i, out_id_col)) != id) throw FormatError("parameter and output ids differ");
        e.ids.push_back(id);
        row_of_id[id] = i;
        for (std::size_t j = 0; j < e.labels.size(); ++j)
            e.outputs(i, static_cast<Eigen::Index>(j)) = outputs.values(i, outputs.column(e.labels[j]));
    }

    for (const auto& p : at(m, "points")) {
        design::DesignPoint pt;
        pt.id = get<int>(p, "id");
        pt.params = json_vec(at(p, "params"));
        const auto status = get<std::string>(p, "status");
        pt.status = status == "accepted"              ? design::PointStatus::Accepted
                    : status == "rejected_classifier" ? design::PointStatus::RejectedByClassifier
                                                      : design::PointStatus::RejectedBySimulation;
        pt.probability = get<double>(p, "probability");
        pt.reason = get<std::string>(p, "reason");
        e.points.push_back(std::move(pt));
    }
    auto rows_for = [&](const char* key) {
        std::vector<int> rows;
        for (int id : get<std::vector<int>>(m, key)) {
            const auto it = row_of_id.find(id);
            if (it == row_of_id.end()) throw FormatError(std::string(key) + " lists unknown id " + std::to_string(id));
            rows.push_back(static_cast<int>(it->second));
        }
        std::sort(rows.begin(), rows.end());
        return rows;
    };
    e.train_rows = rows_for("train_ids");
    e.validation_rows = rows_for("validation_ids");
    return e;
}

std::string enkf_result_to_json(const EnkfResult& r, const std::vector<std::string>& names, const Metadata& meta) {
    json o;
    o["meta"] = meta_json(meta);
    o["names"] = names;
    o["posterior"] = {{"mean", vec_json(r.posterior.mean)}, {"covariance", mat_json(r.posterior.covariance)}};
    o["ensemble_size"] = r.final_ensemble.size();
    o["iterations"] = r.final_ensemble.iteration();
    o["clamp_counts"] = r.clamp_counts;
    json traj = json::array();
    for (const auto& g : r.trajectory) traj.push_back({{"mean", vec_json(g.mean)}, {"variance", vec_json(g.covariance.diagonal())}});
    o["trajectory"] = std::move(traj);
    json innov = json::array();
    for (const auto& v : r.innovations) innov.push_back(vec_json(v));
    o["innovations"] = std::move(innov);
    return o.dump(2) + "\n";
}

std::string mcmc_diagnostics_to_json(const McmcResult& r, const std::vector<std::string>& names, const Metadata& meta) {
    const GaussianSummary s = r.summary();
    json o;
    o["meta"] = meta_json(meta);
    o["names"] = names;
    o["pooled_samples"] = r.samples.rows();
    o["acceptance_rates"] = vec_json(r.acceptance_rates);
    o["rhat"] = vec_json(r.rhat);
    o["ess"] = vec_json(r.ess);
    o["proposal_scales"] = mat_json(r.proposal_scales.transpose());
    o["posterior"] = {{"mean", vec_json(s.mean)}, {"covariance", mat_json(s.covariance)}};
    o["outlier_resets"] = json::array();
    for (const auto& reset : r.outlier_resets)
        o["outlier_resets"].push_back({{"sweep", reset.sweep}, {"chain", reset.chain}, {"source", reset.source}});
    o["warnings"] = r.warnings;
    return o.dump(2) + "\n";
}

Metadata read_metadata(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        const json o = parse(text);
        Metadata meta;
        if (o.contains("meta"))
            for (const auto& [k, v] : o.at("meta").items()) meta.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
        return meta;
    }
    Metadata meta;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line) && !line.empty() && line[0] == '#') {
        const std::string body = line.substr(line.find_first_not_of("# "));
        const auto eq = body.find('=');
        if (eq != std::string::npos) meta.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    }
    return meta;
}

}  // namespace gpenkf::io
