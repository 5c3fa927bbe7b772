#include "config.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include <openssl/evp.h>
#include <rapidjson/error/en.h>
#include <rapidjson/reader.h>

#include "gpenkf/errors.hpp"
#include "gpenkf/io.hpp"
#include "json.hpp"

namespace gpenkf::cli {

namespace {

using json = nlohmann::json;

int line_at(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Records the line of every object key, addressed by JSON pointer.
struct KeyLocator : rapidjson::BaseReaderHandler<rapidjson::UTF8<>, KeyLocator> {
    struct Frame {
        std::string pointer;
        bool object = false;
        std::string key;
    };

    const std::string* text = nullptr;
    const rapidjson::StringStream* stream = nullptr;
    std::vector<Frame> frames;
    std::map<std::string, int> lines;

    std::string value_pointer() const {
        if (frames.empty()) return "";
        const Frame& top = frames.back();
        return top.object ? top.pointer + "/" + top.key : top.pointer;
    }
    bool open(bool object) {
        frames.push_back({value_pointer(), object, {}});
        return true;
    }
    bool close() {
        frames.pop_back();
        return true;
    }

    bool Default() { return true; }
    bool StartObject() { return open(true); }
    bool EndObject(rapidjson::SizeType) { return close(); }
    bool StartArray() { return open(false); }
    bool EndArray(rapidjson::SizeType) { return close(); }
    bool Key(const char* str, rapidjson::SizeType length, bool) {
        frames.back().key.assign(str, length);
        lines[value_pointer()] = line_at(*text, stream->Tell());
        return true;
    }
};

struct Context {
    std::string source;
    std::map<std::string, int> lines;

    [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
        std::string p = pointer;
        int line = 1;
        while (true) {
            const auto it = lines.find(p);
            if (it != lines.end()) {
                line = it->second;
                break;
            }
            const auto slash = p.rfind('/');
            if (slash == std::string::npos) break;
            p.erase(slash);
        }
        throw ConfigError(source + ":" + std::to_string(line) + ": " + message);
    }
};

std::string display(const std::string& pointer) {
    std::string s = pointer.empty() ? "" : pointer.substr(1);
    std::replace(s.begin(), s.end(), '/', '.');
    return s.empty() ? "<root>" : s;
}

class Section {
public:
    Section(const json* node, std::string pointer, const Context& ctx)
        : node_(node), pointer_(std::move(pointer)), ctx_(ctx) {
        if (node_ && !node_->is_object()) ctx_.fail(pointer_, "'" + display(pointer_) + "' must be an object");
    }

    Section child(const char* key) {
        known_.insert(key);
        return {find(key), pointer_ + "/" + key, ctx_};
    }

    void read(const char* key, int& out, int min = std::numeric_limits<int>::min()) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_number_integer()) fail(key, "must be an integer");
        const auto value = v->get<long long>();
        if (value < min || value > std::numeric_limits<int>::max())
            fail(key, "must be an integer >= " + std::to_string(min));
        out = static_cast<int>(value);
    }

    void read(const char* key, std::uint64_t& out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_number_unsigned()) fail(key, "must be a non-negative integer");
        out = v->get<std::uint64_t>();
    }

    void read(const char* key, double& out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_number()) fail(key, "must be a number");
        out = v->get<double>();
    }

    void read(const char* key, bool& out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_boolean()) fail(key, "must be true or false");
        out = v->get<bool>();
    }

    void read_positive(const char* key, double& out) {
        read(key, out);
        if (find(key) && !(out > 0.0)) fail(key, "must be positive");
    }

    void read(const char* key, std::string& out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_string()) fail(key, "must be a string");
        out = v->get<std::string>();
    }

    void read(const char* key, std::vector<double>& out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_array()) fail(key, "must be an array of numbers");
        out.clear();
        for (const auto& e : *v) {
            if (!e.is_number()) fail(key, "must be an array of numbers");
            out.push_back(e.get<double>());
        }
    }

    void read(const char* key, std::optional<std::vector<double>>& out) {
        const json* v = find(key);
        if (v && v->is_null()) {
            known_.insert(key);
            out.reset();
            return;
        }
        if (!v) return;
        std::vector<double> values;
        read(key, values);
        out = std::move(values);
    }

    template <typename E>
    void read_enum(const char* key, E& out, const std::vector<std::pair<std::string, E>>& choices) {
        std::string text;
        const bool present = find(key) != nullptr;
        read(key, text);
        if (!present) return;
        for (const auto& [name, value] : choices)
            if (name == text) {
                out = value;
                return;
            }
        std::string list;
        for (const auto& [name, value] : choices) list += (list.empty() ? "" : ", ") + name;
        fail(key, "must be one of " + list);
    }

    void read_sets(const char* key, std::vector<experiments::MeasurementSet>& out) {
        const json* v = take(key);
        if (!v) return;
        if (!v->is_array() || v->empty()) fail(key, "must be a non-empty array of measurement sets");
        out.clear();
        for (const auto& e : *v) {
            if (!e.is_string()) fail(key, "must contain strings");
            try {
                out.push_back(experiments::parse_measurement_set(e.get<std::string>()));
            } catch (const Error& err) {
                fail(key, err.what());
            }
        }
    }

    /// Rejects keys that were never read.
    void finish() const {
        if (!node_) return;
        for (const auto& [k, v] : node_->items())
            if (!known_.count(k)) ctx_.fail(pointer_ + "/" + k, "unknown key '" + k + "' in '" + display(pointer_) + "'");
    }

    [[noreturn]] void fail(const char* key, const std::string& message) const {
        ctx_.fail(pointer_ + "/" + key, "'" + display(pointer_ + "/" + key) + "' " + message);
    }

private:
    const json* find(const char* key) const {
        if (!node_) return nullptr;
        const auto it = node_->find(key);
        return it == node_->end() ? nullptr : &*it;
    }
    const json* take(const char* key) {
        known_.insert(key);
        return find(key);
    }

    const json* node_;
    std::string pointer_;
    const Context& ctx_;
    std::set<std::string> known_;
};

const std::vector<std::pair<std::string, Mode>> kModes{{"mms", Mode::Mms}, {"toy", Mode::Toy}};
const std::vector<std::pair<std::string, NoiseScaling>> kScalings{{"per_iteration", NoiseScaling::PerIteration},
                                                                  {"unscaled", NoiseScaling::Unscaled}};
const std::vector<std::pair<std::string, Perturbation>> kPerturbations{{"per_member", Perturbation::PerMember},
                                                                       {"shared", Perturbation::Shared}};
const std::vector<std::pair<std::string, ProposalKind>> kProposals{{"componentwise", ProposalKind::Componentwise},
                                                                   {"joint", ProposalKind::Joint}};

template <typename E>
std::string name_of(E value, const std::vector<std::pair<std::string, E>>& choices) {
    for (const auto& [name, v] : choices)
        if (v == value) return name;
    return "?";
}

}  // namespace

mms::Geometry GeometryConfig::build() const {
    return mms::Geometry::cable(length, dx, stim_length, sensors, sensor_from, sensor_to);
}

std::string RunConfig::ensemble_dir() const {
    return emulation.ensemble.empty() ? (std::filesystem::path(output_dir) / "ensemble").string() : emulation.ensemble;
}

std::string RunConfig::bank_path() const {
    return calibration.bank.empty() ? (std::filesystem::path(output_dir) / "bank.json").string() : calibration.bank;
}

std::string RunConfig::calibration_ensemble_dir() const {
    return calibration.ensemble.empty() ? ensemble_dir() : calibration.ensemble;
}

std::string to_string(Mode m) { return name_of(m, kModes); }

RunConfig parse_config(const std::string& text, const std::string& source) {
    Context ctx{source, {}};
    {
        KeyLocator locator;
        rapidjson::StringStream stream(text.c_str());
        locator.text = &text;
        locator.stream = &stream;
        rapidjson::Reader reader;
        const rapidjson::ParseResult ok = reader.Parse(stream, locator);
        if (!ok)
            throw ConfigError(source + ":" + std::to_string(line_at(text, ok.Offset())) + ": invalid JSON: " +
                              rapidjson::GetParseError_En(ok.Code()));
        ctx.lines = std::move(locator.lines);
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(source + ":1: invalid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(source + ":1: configuration must be a JSON object");

    RunConfig cfg;
    Section root(&doc, "", ctx);
    root.read_enum("mode", cfg.mode, kModes);
    root.read("seed", cfg.seed);
    root.read("output_dir", cfg.output_dir);
    root.read("threads", cfg.threads, 1);

    {
        Section model = root.child("model");
        Section geo = model.child("geometry");
        auto& g = cfg.model.geometry;
        geo.read_positive("length", g.length);
        geo.read_positive("dx", g.dx);
        geo.read_positive("stim_length", g.stim_length);
        geo.read("sensors", g.sensors, 1);
        geo.read("sensor_from", g.sensor_from);
        geo.read("sensor_to", g.sensor_to);
        geo.finish();
        Section proto = model.child("protocol");
        auto& p = cfg.model.protocol;
        proto.read("s1_count", p.s1_count, 1);
        proto.read_positive("s1_interval", p.s1_interval);
        proto.read("s2_coupling", p.s2_coupling);
        proto.read_positive("stim_amplitude", p.stim_amplitude);
        proto.read_positive("stim_duration", p.stim_duration);
        proto.read_positive("tail", p.tail);
        proto.finish();
        model.read("dt", cfg.model.dt);
        model.finish();
    }
    {
        Section d = root.child("design");
        auto& c = cfg.design;
        d.read("initial_size", c.initial_size, 2);
        d.read("lhs_restarts", c.lhs_restarts, 1);
        d.read_positive("train_fraction", c.train_fraction);
        if (c.train_fraction >= 1.0) d.fail("train_fraction", "must lie in (0, 1)");
        Section cl = d.child("classifier");
        cl.read("samples", c.classifier_samples, 10);
        cl.read_positive("holdout_fraction", c.classifier_holdout);
        if (c.classifier_holdout >= 1.0) cl.fail("holdout_fraction", "must lie in (0, 1)");
        cl.read("lhs_restarts", c.classifier_lhs_restarts, 1);
        cl.read("margin", c.classifier_margin);
        cl.read_positive("learning_rate", c.classifier_learning_rate);
        cl.read("max_iterations", c.classifier_max_iterations, 1);
        cl.finish();
        d.finish();
    }
    {
        Section t = root.child("toy");
        auto& c = cfg.toy;
        t.read("locations", c.locations);
        if (c.locations.empty()) t.fail("locations", "must not be empty");
        t.read("truth", c.truth);
        if (c.truth.size() != 2) t.fail("truth", "must have two entries");
        t.read_positive("noise_sd", c.noise_sd);
        t.read("training_points", c.training_points, 2);
        t.read("test_points", c.test_points, 2);
        t.read("sigma_theta", c.sigma_theta);
        if (c.sigma_theta < 0.0) t.fail("sigma_theta", "must be non-negative");
        t.finish();
    }
    {
        Section e = root.child("emulation");
        auto& c = cfg.emulation;
        e.read("ensemble", c.ensemble);
        e.read("r2_floor", c.r2_floor);
        e.read("restarts", c.restarts, 1);
        e.read("max_iterations", c.max_iterations, 1);
        e.finish();
    }
    {
        Section s = root.child("calibration");
        auto& c = cfg.calibration;
        s.read("bank", c.bank);
        s.read("ensemble", c.ensemble);
        s.read("observations", c.observations);
        s.read("truth_index", c.truth_index, 0);
        std::string set = experiments::to_string(c.measurement_set);
        s.read("measurement_set", set);
        try {
            c.measurement_set = experiments::parse_measurement_set(set);
        } catch (const Error& err) {
            s.fail("measurement_set", err.what());
        }
        Section noise = s.child("noise");
        noise.read_positive("lat", c.noise.lat);
        noise.read_positive("apd", c.noise.apd);
        noise.finish();
        s.read("ensemble_size", c.ensemble_size, 2);
        s.read("iterations", c.iterations, 1);
        s.read("sigma_theta", c.sigma_theta);
        if (c.sigma_theta && std::any_of(c.sigma_theta->begin(), c.sigma_theta->end(), [](double v) { return !(v >= 0.0); }))
            s.fail("sigma_theta", "entries must be non-negative");
        s.read_enum("noise_scaling", c.noise_scaling, kScalings);
        s.read_enum("perturbation", c.perturbation, kPerturbations);
        s.finish();
    }
    {
        Section m = root.child("mcmc");
        auto& c = cfg.mcmc;
        m.read("chains", c.chains, 1);
        m.read("samples", c.samples, 1);
        m.read("burn_in", c.burn_in, 0);
        m.read("thin", c.thin, 1);
        m.read_enum("proposal", c.proposal, kProposals);
        m.read_positive("target_acceptance", c.target_acceptance);
        if (c.target_acceptance >= 1.0) m.fail("target_acceptance", "must be below 1");
        m.read("anneal_fraction", c.anneal_fraction);
        if (!(c.anneal_fraction >= 0.0 && c.anneal_fraction <= 1.0)) m.fail("anneal_fraction", "must lie in [0, 1]");
        m.read("reset_outliers", c.reset_outliers);
        if (c.burn_in >= c.samples) m.fail("burn_in", "must be smaller than samples");
        m.finish();
    }
    {
        Section s = root.child("study");
        s.read("cases", cfg.study.cases, 1);
        s.read_sets("sets", cfg.study.sets);
        s.finish();
    }
    root.finish();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const std::exception& e) {
        throw ConfigError(path + ":0: cannot read configuration: " + e.what());
    }
    return parse_config(text, path);
}

std::string canonical_config(const RunConfig& cfg) {
    json o;
    o["mode"] = to_string(cfg.mode);
    o["seed"] = cfg.seed;
    const auto& g = cfg.model.geometry;
    const auto& p = cfg.model.protocol;
    o["model"] = {{"geometry",
                   {{"length", g.length},
                    {"dx", g.dx},
                    {"stim_length", g.stim_length},
                    {"sensors", g.sensors},
                    {"sensor_from", g.sensor_from},
                    {"sensor_to", g.sensor_to}}},
                  {"protocol",
                   {{"s1_count", p.s1_count},
                    {"s1_interval", p.s1_interval},
                    {"s2_coupling", p.s2_coupling},
                    {"stim_amplitude", p.stim_amplitude},
                    {"stim_duration", p.stim_duration},
                    {"tail", p.tail}}},
                  {"dt", cfg.model.dt}};
    const auto& d = cfg.design;
    o["design"] = {{"initial_size", d.initial_size},
                   {"lhs_restarts", d.lhs_restarts},
                   {"train_fraction", d.train_fraction},
                   {"classifier",
                    {{"samples", d.classifier_samples},
                     {"holdout_fraction", d.classifier_holdout},
                     {"lhs_restarts", d.classifier_lhs_restarts},
                     {"margin", d.classifier_margin},
                     {"learning_rate", d.classifier_learning_rate},
                     {"max_iterations", d.classifier_max_iterations}}}};
    const auto& t = cfg.toy;
    o["toy"] = {{"locations", t.locations},
                {"truth", t.truth},
                {"noise_sd", t.noise_sd},
                {"training_points", t.training_points},
                {"test_points", t.test_points},
                {"sigma_theta", t.sigma_theta}};
    const auto& e = cfg.emulation;
    o["emulation"] = {{"ensemble", e.ensemble},
                      {"r2_floor", e.r2_floor},
                      {"restarts", e.restarts},
                      {"max_iterations", e.max_iterations}};
    const auto& c = cfg.calibration;
    o["calibration"] = {{"bank", c.bank},
                        {"ensemble", c.ensemble},
                        {"observations", c.observations},
                        {"truth_index", c.truth_index},
                        {"measurement_set", experiments::to_string(c.measurement_set)},
                        {"noise", {{"lat", c.noise.lat}, {"apd", c.noise.apd}}},
                        {"ensemble_size", c.ensemble_size},
                        {"iterations", c.iterations},
                        {"sigma_theta", c.sigma_theta ? json(*c.sigma_theta) : json(nullptr)},
                        {"noise_scaling", name_of(c.noise_scaling, kScalings)},
                        {"perturbation", name_of(c.perturbation, kPerturbations)}};
    const auto& m = cfg.mcmc;
    o["mcmc"] = {{"chains", m.chains},
                 {"samples", m.samples},
                 {"burn_in", m.burn_in},
                 {"thin", m.thin},
                 {"proposal", name_of(m.proposal, kProposals)},
                 {"target_acceptance", m.target_acceptance},
                 {"anneal_fraction", m.anneal_fraction},
                 {"reset_outliers", m.reset_outliers}};
    std::vector<std::string> sets;
    for (auto s : cfg.study.sets) sets.push_back(experiments::to_string(s));
    o["study"] = {{"cases", cfg.study.cases}, {"sets", sets}};
    return o.dump();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_config(cfg)); }

}  // namespace gpenkf::cli
