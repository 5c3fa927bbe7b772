#include "gpenkf/markers.hpp"

#include <cmath>
#include <limits>

#include "gpenkf/errors.hpp"

namespace gpenkf::mms {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::span<const double> row_span(const SimulationTrace& trace, int node, std::vector<double>& buffer) {
    const Eigen::Index r = trace.row_of(node);
    buffer.resize(static_cast<std::size_t>(trace.v.cols()));
    for (Eigen::Index j = 0; j < trace.v.cols(); ++j) buffer[static_cast<std::size_t>(j)] = trace.v(r, j);
    return buffer;
}

double interpolate_time(double t0, double v0, double t1, double v1, double level) {
    if (v1 == v0) return t1;
    return t0 + (level - v0) / (v1 - v0) * (t1 - t0);
}

// Index i such that the upward crossing lies in (times[i], times[i+1]];
// returns the interpolated time or NaN.
double find_upstroke(std::span<const double> t, std::span<const double> v, TimeWindow w, std::size_t* index) {
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        if (t[i + 1] < w.start) continue;
        if (t[i] >= w.end) break;
        if (v[i] < kActivationThreshold && v[i + 1] >= kActivationThreshold) {
            const double tc = interpolate_time(t[i], v[i], t[i + 1], v[i + 1], kActivationThreshold);
            if (tc < w.start) continue;
            if (tc >= w.end) break;
            if (index) *index = i;
            return tc;
        }
    }
    return kNaN;
}

}  // namespace

const char* to_string(MarkerStatus s) noexcept {
    switch (s) {
        case MarkerStatus::Ok: return "ok";
        case MarkerStatus::NoCapture: return "NoCapture";
        case MarkerStatus::NoRecovery: return "NoRecovery";
    }
    return "?";
}

const char* to_string(OutputType t) noexcept {
    switch (t) {
        case OutputType::S1: return "S1";
        case OutputType::S2: return "S2";
        case OutputType::APD: return "APD";
    }
    return "?";
}

Marker extract_lat(std::span<const double> times, std::span<const double> v, TimeWindow window) {
    if (times.size() != v.size()) throw DimensionMismatch("time and voltage series differ in length");
    const double tc = find_upstroke(times, v, window, nullptr);
    if (std::isnan(tc)) return {0.0, MarkerStatus::NoCapture};
    return {tc, MarkerStatus::Ok};
}

Marker extract_lat(const SimulationTrace& trace, TimeWindow window, int node) {
    std::vector<double> buf;
    return extract_lat(trace.times, row_span(trace, node, buf), window);
}

Marker extract_apd(std::span<const double> times, std::span<const double> v, TimeWindow window) {
    if (times.size() != v.size()) throw DimensionMismatch("time and voltage series differ in length");
    std::size_t i = 0;
    const double lat = find_upstroke(times, v, window, &i);
    if (std::isnan(lat)) return {0.0, MarkerStatus::NoCapture};
    double peak = v[i + 1];
    for (std::size_t j = i + 1; j + 1 < times.size(); ++j) {
        if (times[j + 1] >= window.end) break;
        peak = std::max(peak, v[j]);
        const double level = kRecoveryFraction * peak;
        if (v[j] > level && v[j + 1] <= level) {
            const double lrt = interpolate_time(times[j], v[j], times[j + 1], v[j + 1], level);
            return {lrt - lat, MarkerStatus::Ok};
        }
    }
    return {0.0, MarkerStatus::NoRecovery};
}

Marker extract_apd(const SimulationTrace& trace, TimeWindow window, int node) {
    std::vector<double> buf;
    return extract_apd(trace.times, row_span(trace, node, buf), window);
}

Eigen::VectorXd BeatMarkers::flatten() const {
    const Eigen::Index n = lat_s1.size();
    Eigen::VectorXd out(3 * n);
    out << lat_s1, lat_s2, apd_s2;
    return out;
}

bool BeatMarkers::complete() const { return flatten().allFinite(); }

const Eigen::VectorXd& BeatMarkers::field(OutputType t) const {
    switch (t) {
        case OutputType::S1: return lat_s1;
        case OutputType::S2: return lat_s2;
        case OutputType::APD: return apd_s2;
    }
    return apd_s2;
}

std::vector<std::string> output_labels(int n_sensors) {
    std::vector<std::string> labels;
    for (OutputType t : kOutputTypes) {
        for (int s = 0; s < n_sensors; ++s) labels.push_back(std::string(to_string(t)) + "@" + std::to_string(s));
    }
    return labels;
}

TimeWindow s1_lat_window(const PacingProtocol& protocol) {
    const double start = protocol.last_s1_onset();
    double end = start + protocol.s1_interval;
    if (protocol.has_s2()) end = std::min(end, protocol.s2_onset());
    return {start, end};
}

TimeWindow s2_lat_window(const PacingProtocol& protocol) {
    return {protocol.s2_onset(), protocol.end_time() + 1.0};
}

BeatMarkers beat_markers(const SimulationTrace& trace, const PacingProtocol& protocol, std::span<const int> nodes) {
    if (!protocol.has_s2()) throw InvalidArgument("S1S2 markers need a protocol with an S2 stimulus");
    const auto n = static_cast<Eigen::Index>(nodes.size());
    BeatMarkers m;
    m.nodes.assign(nodes.begin(), nodes.end());
    m.lat_s1 = Eigen::VectorXd::Constant(n, kNaN);
    m.lat_s2 = Eigen::VectorXd::Constant(n, kNaN);
    m.apd_s2 = Eigen::VectorXd::Constant(n, kNaN);
    m.capture.assign(nodes.size(), {false, false});

    const TimeWindow w1 = s1_lat_window(protocol);
    const TimeWindow w2 = s2_lat_window(protocol);
    std::vector<double> buf;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto series = row_span(trace, nodes[static_cast<std::size_t>(k)], buf);
        const Marker s1 = extract_lat(trace.times, series, w1);
        if (s1.ok()) {
            m.lat_s1[k] = s1.value - protocol.last_s1_onset();
            m.capture[static_cast<std::size_t>(k)][0] = true;
        }
        const Marker s2 = extract_lat(trace.times, series, w2);
        if (s2.ok()) {
            m.lat_s2[k] = s2.value - protocol.s2_onset();
            m.capture[static_cast<std::size_t>(k)][1] = true;
            const Marker apd = extract_apd(trace.times, series, w2);
            if (apd.ok()) m.apd_s2[k] = apd.value;
        }
    }
    return m;
}

BeatMarkers s1s2_markers(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                         const SimulationOptions& options) {
    SimulationOptions opt = options;
    opt.record_nodes = geometry.sensors;
    opt.record_gate = false;
    const SimulationTrace trace = simulate_tissue(p, geometry, protocol, opt);
    return beat_markers(trace, protocol, geometry.sensors);
}

Eigen::VectorXd s1s2_outputs(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                             const SimulationOptions& options) {
    return s1s2_markers(p, geometry, protocol, options).flatten();
}

S1S2Run s1s2_run(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                 const SimulationOptions& options) {
    SimulationOptions opt = options;
    opt.record_nodes.reset();
    opt.record_gate = false;
    const SimulationTrace trace = simulate_tissue(p, geometry, protocol, opt);
    std::vector<int> all(static_cast<std::size_t>(geometry.node_count()));
    for (int i = 0; i < geometry.node_count(); ++i) all[static_cast<std::size_t>(i)] = i;
    S1S2Run out;
    out.field = beat_markers(trace, protocol, all);
    const BeatMarkers sensors = beat_markers(trace, protocol, geometry.sensors);
    out.outputs = sensors.flatten();
    return out;
}

CellFeasibility cell_feasibility(const CellParams& p, const PacingProtocol& protocol, double dt) {
    PacingProtocol s1_only = protocol;
    s1_only.s2_coupling = 0.0;
    s1_only.tail = protocol.s1_interval;
    CellFeasibility out;
    SimulationTrace trace;
    try {
        trace = simulate_cell(p, s1_only, dt);
    } catch (const UnstableStep&) {
        out.reason = "unstable";
        return out;
    }

    std::vector<double> buf;
    const auto series = row_span(trace, 0, buf);
    for (int b = 0; b < s1_only.s1_count; ++b) {
        const TimeWindow w{b * s1_only.s1_interval, (b + 1) * s1_only.s1_interval};
        const Marker apd = extract_apd(trace.times, series, w);
        out.apd_s1.push_back(apd.ok() ? apd.value : kNaN);
        if (!apd.ok() && out.reason.empty())
            out.reason = apd.status == MarkerStatus::NoCapture ? "no capture" : "no recovery";
    }
    if (out.reason.empty()) {
        for (double a : out.apd_s1) {
            if (a > kMaxFeasibleApd) {
                out.reason = "APD exceeds 500 ms";
                break;
            }
        }
    }
    if (out.reason.empty()) {
        const std::size_t n = out.apd_s1.size();
        if (n >= 3 && std::abs(out.apd_s1[n - 1] - out.apd_s1[n - 2]) > kAlternansThreshold)
            out.reason = "alternans";
    }
    out.feasible = out.reason.empty();
    return out;
}

}  // namespace gpenkf::mms
