#include "gpenkf/mms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gpenkf/errors.hpp"

namespace gpenkf::mms {

namespace {

constexpr double kVoltageFloor = -0.5;
constexpr double kVoltageCeiling = 1.5;

// Half-open step ranges [begin, end) during which the stimulus is on.
struct StimWindow {
    long begin;
    long end;
};

struct RunSetup {
    double dt;
    long steps_per_sample;
    long total_samples;  // including t = 0
};

RunSetup plan_steps(double dt_max, double duration, double sample_interval) {
    if (!(sample_interval > 0.0)) throw InvalidArgument("sample interval must be positive");
    if (!(dt_max > 0.0)) throw InvalidArgument("time step must be positive");
    const long per_sample = std::max(1L, static_cast<long>(std::ceil(sample_interval / dt_max - 1e-9)));
    const long samples = static_cast<long>(std::floor(duration / sample_interval + 1e-9)) + 1;
    return {sample_interval / static_cast<double>(per_sample), per_sample, samples};
}

std::vector<StimWindow> stim_windows(const PacingProtocol& protocol, double dt) {
    std::vector<StimWindow> out;
    for (double onset : protocol.stimulus_onsets()) {
        const long begin = std::lround(onset / dt);
        const long len = std::max(1L, std::lround(protocol.stim_duration / dt));
        out.push_back({begin, begin + len});
    }
    return out;
}

bool stim_on(const std::vector<StimWindow>& windows, long step) {
    for (const auto& w : windows) {
        if (step >= w.begin && step < w.end) return true;
    }
    return false;
}

// Explicit monodomain integrator shared by the cell and tissue entry points
// so that the decoupled (D = 0) tissue reproduces the cell model exactly.
class Integrator {
public:
    Integrator(const CellParams& cell, double d_cm2_per_ms, const Geometry& geo, double dt)
        : cell_(cell),
          geo_(geo),
          dt_(dt),
          diff_coeff_(d_cm2_per_ms * dt / (geo.dx * geo.dx)),
          open_decay_(std::exp(-dt / cell.tau_open)),
          close_decay_(std::exp(-dt / cell.tau_close)),
          inv_tau_in_(1.0 / cell.tau_in),
          inv_tau_out_(1.0 / cell.tau_out),
          v_(Eigen::VectorXd::Zero(geo.node_count())),
          h_(Eigen::VectorXd::Ones(geo.node_count())),
          v_next_(geo.node_count()),
          stimulated_(static_cast<std::size_t>(geo.node_count()), 0) {
        for (int n : geo.stim_nodes) stimulated_[static_cast<std::size_t>(n)] = 1;
    }

    Eigen::VectorXd& v() { return v_; }
    Eigen::VectorXd& h() { return h_; }

    void step(bool stimulus) {
        const int nx = geo_.nx;
        const int ny = geo_.ny;
        const double stim = cell_stim_amplitude_;
        const double vg = cell_.v_gate;
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const int i = ix + nx * iy;
                double vs = v_[i];
                if (diff_coeff_ != 0.0) {
                    // Mirrored ghost nodes give the no-flux boundary.
                    const double left = ix > 0 ? v_[i - 1] : (nx > 1 ? v_[i + 1] : v_[i]);
                    const double right = ix + 1 < nx ? v_[i + 1] : (nx > 1 ? v_[i - 1] : v_[i]);
                    double lap = left + right - 2.0 * v_[i];
                    if (ny > 1) {
                        const double down = iy > 0 ? v_[i - nx] : v_[i + nx];
                        const double up = iy + 1 < ny ? v_[i + nx] : v_[i - nx];
                        lap += down + up - 2.0 * v_[i];
                    }
                    vs += diff_coeff_ * lap;
                }
                double h = h_[i];
                h = vs <= vg ? 1.0 - (1.0 - h) * open_decay_ : h * close_decay_;
                h_[i] = h;
                double rate = h * vs * (vs - vg) * (1.0 - vs) * inv_tau_in_ - (1.0 - h) * vs * inv_tau_out_;
                if (stimulus && stimulated_[static_cast<std::size_t>(i)]) rate += stim;
                v_next_[i] = vs + dt_ * rate;
            }
        }
        v_.swap(v_next_);
    }

    void set_stimulus(double amplitude, double duration) {
        cell_stim_amplitude_ = amplitude;
        ceiling_ = kVoltageCeiling + amplitude * duration;
    }

    void check_bounds(double t) const {
        const double lo = v_.minCoeff();
        const double hi = v_.maxCoeff();
        if (!(lo >= kVoltageFloor && hi <= ceiling_))
            throw UnstableStep("voltage left [" + std::to_string(kVoltageFloor) + ", " + std::to_string(ceiling_) +
                               "] at t = " + std::to_string(t) + " ms; reduce the time step");
    }

private:
    CellParams cell_;
    Geometry geo_;
    double dt_;
    double diff_coeff_;
    double open_decay_;
    double close_decay_;
    double inv_tau_in_;
    double inv_tau_out_;
    double cell_stim_amplitude_ = 0.0;
    double ceiling_ = kVoltageCeiling;
    Eigen::VectorXd v_;
    Eigen::VectorXd h_;
    Eigen::VectorXd v_next_;
    std::vector<char> stimulated_;
};

SimulationTrace run(const CellParams& cell, double conductivity, const Geometry& geo,
                    const PacingProtocol* protocol, double duration, const SimulationOptions& opt) {
    cell.validate();
    geo.validate();
    const double dt_max = opt.dt > 0.0 ? opt.dt : stable_dt(cell, conductivity, geo.dx);
    const RunSetup plan = plan_steps(dt_max, duration, opt.sample_interval);

    Integrator integ(cell, conductivity * 1e-3, geo, plan.dt);
    std::vector<StimWindow> windows;
    if (protocol != nullptr) {
        windows = stim_windows(*protocol, plan.dt);
        integ.set_stimulus(protocol->stim_amplitude, protocol->stim_duration);
    }
    if (opt.initial_v) {
        if (opt.initial_v->size() != geo.node_count()) throw DimensionMismatch("initial_v has wrong length");
        integ.v() = *opt.initial_v;
    }
    if (opt.initial_h) {
        if (opt.initial_h->size() != geo.node_count()) throw DimensionMismatch("initial_h has wrong length");
        integ.h() = *opt.initial_h;
    }

    SimulationTrace trace;
    trace.dt = plan.dt;
    trace.sensors = geo.sensors;
    if (opt.record_nodes) {
        trace.nodes = *opt.record_nodes;
        for (int n : trace.nodes) {
            if (n < 0 || n >= geo.node_count()) throw InvalidArgument("record node out of range");
        }
    } else {
        trace.nodes.resize(static_cast<std::size_t>(geo.node_count()));
        for (int n = 0; n < geo.node_count(); ++n) trace.nodes[static_cast<std::size_t>(n)] = n;
    }
    const auto rows = static_cast<Eigen::Index>(trace.nodes.size());
    trace.v.resize(rows, plan.total_samples);
    if (opt.record_gate) trace.h.resize(rows, plan.total_samples);
    trace.times.resize(static_cast<std::size_t>(plan.total_samples));

    auto record = [&](long sample) {
        trace.times[static_cast<std::size_t>(sample)] = static_cast<double>(sample) * opt.sample_interval;
        for (Eigen::Index r = 0; r < rows; ++r) {
            trace.v(r, sample) = integ.v()[trace.nodes[static_cast<std::size_t>(r)]];
            if (opt.record_gate) trace.h(r, sample) = integ.h()[trace.nodes[static_cast<std::size_t>(r)]];
        }
    };

    record(0);
    long step = 0;
    for (long sample = 1; sample < plan.total_samples; ++sample) {
        for (long k = 0; k < plan.steps_per_sample; ++k, ++step) {
            integ.step(!windows.empty() && stim_on(windows, step));
            integ.check_bounds(static_cast<double>(step + 1) * plan.dt);
        }
        record(sample);
    }
    return trace;
}

Geometry single_node() {
    Geometry g;
    g.nx = 1;
    g.ny = 1;
    g.dx = 1.0;
    g.stim_nodes = {0};
    g.sensors = {0};
    return g;
}

}  // namespace

void CellParams::validate() const {
    if (!(tau_in > 0.0 && tau_out > 0.0 && tau_open > 0.0 && tau_close > 0.0))
        throw InvalidArgument("cell time constants must be positive");
    if (!(v_gate > 0.0 && v_gate < 1.0)) throw InvalidArgument("v_gate must lie in (0, 1)");
}

void TissueParams::validate() const {
    cell.validate();
    if (!(conductivity >= 0.0) || !std::isfinite(conductivity))
        throw InvalidArgument("conductivity must be finite and non-negative");
}

TissueParams TissueParams::from_vector(const Eigen::Ref<const Eigen::VectorXd>& theta) {
    if (theta.size() != 5) throw DimensionMismatch("tissue parameter vector must have 5 entries");
    TissueParams p;
    p.cell.tau_in = theta[0];
    p.cell.tau_out = theta[1];
    p.cell.tau_open = theta[2];
    p.cell.tau_close = theta[3];
    p.conductivity = theta[4];
    return p;
}

Eigen::VectorXd TissueParams::to_vector() const {
    Eigen::VectorXd v(5);
    v << cell.tau_in, cell.tau_out, cell.tau_open, cell.tau_close, conductivity;
    return v;
}

void PacingProtocol::validate() const {
    if (s1_count < 1) throw InvalidArgument("at least one S1 stimulus required");
    if (!(s1_interval > 0.0) || !(stim_duration > 0.0) || !(tail > 0.0))
        throw InvalidArgument("pacing intervals must be positive");
}

std::vector<double> PacingProtocol::stimulus_onsets() const {
    std::vector<double> out;
    for (int i = 0; i < s1_count; ++i) out.push_back(i * s1_interval);
    if (has_s2()) out.push_back(s2_onset());
    return out;
}

double PacingProtocol::end_time() const noexcept { return (has_s2() ? s2_onset() : last_s1_onset()) + tail; }

void Geometry::validate() const {
    if (nx < 1 || ny < 1) throw InvalidArgument("geometry needs at least one node");
    if (node_count() > 10000) throw InvalidArgument("geometry exceeds 10^4 nodes");
    if (!(dx > 0.0)) throw InvalidArgument("grid spacing must be positive");
    for (int n : stim_nodes) {
        if (n < 0 || n >= node_count()) throw InvalidArgument("stimulus node out of range");
    }
    for (int n : sensors) {
        if (n < 0 || n >= node_count()) throw InvalidArgument("sensor node out of range");
    }
}

Geometry Geometry::cable(double length, double dx, double stim_length, int n_sensors, double sensor_from,
                         double sensor_to) {
    Geometry g;
    g.dx = dx;
    g.nx = static_cast<int>(std::lround(length / dx)) + 1;
    g.ny = 1;
    for (int i = 0; i < g.nx; ++i) {
        if (i * dx <= stim_length + 1e-12) g.stim_nodes.push_back(i);
    }
    for (int s = 0; s < n_sensors; ++s) {
        const double x = n_sensors == 1 ? sensor_from
                                        : sensor_from + (sensor_to - sensor_from) * s / (n_sensors - 1.0);
        g.sensors.push_back(std::clamp(static_cast<int>(std::lround(x / dx)), 0, g.nx - 1));
    }
    g.validate();
    return g;
}

Geometry Geometry::sheet(double width, double height, double dx, double stim_length, int n_sensors,
                         double sensor_from, double sensor_to) {
    Geometry g;
    g.dx = dx;
    g.nx = static_cast<int>(std::lround(width / dx)) + 1;
    g.ny = static_cast<int>(std::lround(height / dx)) + 1;
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            if (ix * dx <= stim_length + 1e-12) g.stim_nodes.push_back(ix + g.nx * iy);
        }
    }
    if (sensor_to < 0.0) sensor_to = width - 0.1;
    const int mid = g.ny / 2;
    for (int s = 0; s < n_sensors; ++s) {
        const double x = n_sensors == 1 ? sensor_from
                                        : sensor_from + (sensor_to - sensor_from) * s / (n_sensors - 1.0);
        g.sensors.push_back(std::clamp(static_cast<int>(std::lround(x / dx)), 0, g.nx - 1) + g.nx * mid);
    }
    g.validate();
    return g;
}

Eigen::Index SimulationTrace::row_of(int node) const {
    const auto it = std::find(nodes.begin(), nodes.end(), node);
    if (it == nodes.end()) throw InvalidArgument("node " + std::to_string(node) + " was not recorded");
    return static_cast<Eigen::Index>(it - nodes.begin());
}

double stable_dt(const CellParams& cell, double conductivity_cm2_per_s, double dx) {
    double dt = std::min(0.02, 0.1 * cell.tau_in);
    const double d = conductivity_cm2_per_s * 1e-3;
    if (d > 0.0) dt = std::min(dt, 0.25 * dx * dx / d);
    return dt;
}

SimulationTrace simulate_cell(const CellParams& p, const PacingProtocol& protocol, double dt,
                              double sample_interval) {
    protocol.validate();
    SimulationOptions opt;
    opt.dt = dt;
    opt.sample_interval = sample_interval;
    return run(p, 0.0, single_node(), &protocol, protocol.end_time(), opt);
}

SimulationTrace simulate_cell_unforced(const CellParams& p, double duration, double v0, double h0, double dt,
                                       double sample_interval) {
    SimulationOptions opt;
    opt.dt = dt;
    opt.sample_interval = sample_interval;
    opt.initial_v = Eigen::VectorXd::Constant(1, v0);
    opt.initial_h = Eigen::VectorXd::Constant(1, h0);
    return run(p, 0.0, single_node(), nullptr, duration, opt);
}

SimulationTrace simulate_tissue(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                                const SimulationOptions& options) {
    p.validate();
    protocol.validate();
    return run(p.cell, p.conductivity, geometry, &protocol, protocol.end_time(), options);
}

SimulationTrace simulate_tissue_unforced(const TissueParams& p, const Geometry& geometry, double duration,
                                         const SimulationOptions& options) {
    p.validate();
    return run(p.cell, p.conductivity, geometry, nullptr, duration, options);
}

}  // namespace gpenkf::mms
