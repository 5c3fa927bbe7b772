#pragma once

// Modified Mitchell-Schaeffer cell and monodomain tissue solvers.
//
// Units: time in ms, length in cm, conductivity D in cm^2/s (converted to
// cm^2/ms internally). Voltage v and gate h are dimensionless.
//
// A run throws UnstableStep when v leaves [-0.5, 1.5 + a * T], where a * T is
// the charge of one stimulus (amplitude times duration). The extra headroom
// admits a stimulus delivered during the plateau, when h is nearly closed.

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace gpenkf::mms {

struct CellParams {
    double tau_in = 0.1;
    double tau_out = 10.0;
    double tau_open = 140.0;
    double tau_close = 125.0;
    double v_gate = 0.1;

    void validate() const;
};

struct TissueParams {
    CellParams cell;
    double conductivity = 1.0;  ///< cm^2/s

    void validate() const;

    /// From the ordered vector (tau_in, tau_out, tau_open, tau_close, D).
    static TissueParams from_vector(const Eigen::Ref<const Eigen::VectorXd>& theta);
    Eigen::VectorXd to_vector() const;
};

struct PacingProtocol {
    int s1_count = 3;
    double s1_interval = 800.0;  ///< ms
    double s2_coupling = 500.0;  ///< ms after the last S1; <= 0 disables S2
    double stim_amplitude = 1.0; ///< added to dv/dt while the stimulus is on
    double stim_duration = 2.0;  ///< ms
    double tail = 700.0;         ///< simulated time after the last stimulus, ms

    void validate() const;

    bool has_s2() const noexcept { return s2_coupling > 0.0; }
    /// Onsets of all stimuli in delivery order (S1 beats, then S2).
    std::vector<double> stimulus_onsets() const;
    double last_s1_onset() const noexcept { return (s1_count - 1) * s1_interval; }
    double s2_onset() const noexcept { return last_s1_onset() + s2_coupling; }
    double end_time() const noexcept;
};

/// Regular 1D cable (ny == 1) or 2D rectangle on a uniform grid, with the
/// stimulus strip and sensor nodes. Node index = ix + nx * iy.
struct Geometry {
    int nx = 121;
    int ny = 1;
    double dx = 0.025;                ///< cm
    std::vector<int> stim_nodes;
    std::vector<int> sensors;

    int node_count() const noexcept { return nx * ny; }
    bool is_cable() const noexcept { return ny == 1; }
    double x_of(int node) const noexcept { return dx * (node % nx); }

    void validate() const;

    /// Cable of `length` cm; nodes with x <= stim_length are stimulated and
    /// `n_sensors` sensors are placed at evenly spaced positions over
    /// [sensor_from, sensor_to], snapped to the nearest node.
    static Geometry cable(double length = 3.0, double dx = 0.025, double stim_length = 0.2, int n_sensors = 15,
                          double sensor_from = 0.3, double sensor_to = 2.9);

    /// Rectangle of width x height cm stimulated along the x <= stim_length
    /// strip; sensors spaced along the horizontal midline.
    static Geometry sheet(double width, double height, double dx, double stim_length = 0.2, int n_sensors = 15,
                          double sensor_from = 0.3, double sensor_to = -1.0);
};

struct SimulationOptions {
    double dt = 0.0;                     ///< <= 0 selects the stability rule
    double sample_interval = 1.0;        ///< ms between stored samples
    std::optional<std::vector<int>> record_nodes;  ///< default: every node
    bool record_gate = true;
    /// Initial state; default is rest (v = 0, h = 1) everywhere.
    std::optional<Eigen::VectorXd> initial_v;
    std::optional<Eigen::VectorXd> initial_h;
};

struct SimulationTrace {
    std::vector<double> times;           ///< ms
    std::vector<int> nodes;              ///< recorded node ids, one row each
    Eigen::MatrixXd v;                   ///< nodes x samples
    Eigen::MatrixXd h;                   ///< empty unless gates were recorded
    std::vector<int> sensors;
    double dt = 0.0;                     ///< internal step actually used

    /// Row of `node` in v/h; throws InvalidArgument if not recorded.
    Eigen::Index row_of(int node) const;
};

/// Stable internal step: min(0.02, 0.25 dx^2 / D, 0.1 tau_in).
double stable_dt(const CellParams& cell, double conductivity_cm2_per_s, double dx);

/// Single-node run of the reaction system with the protocol's stimulus.
SimulationTrace simulate_cell(const CellParams& p, const PacingProtocol& protocol, double dt = 0.0,
                              double sample_interval = 1.0);

/// Same, with the stimulus disabled and an explicit initial state.
SimulationTrace simulate_cell_unforced(const CellParams& p, double duration, double v0, double h0, double dt = 0.0,
                                       double sample_interval = 1.0);

/// Monodomain run on `geometry` with no-flux boundaries.
SimulationTrace simulate_tissue(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                                const SimulationOptions& options = {});

/// As above with the stimulus switched off for the whole run.
SimulationTrace simulate_tissue_unforced(const TissueParams& p, const Geometry& geometry, double duration,
                                         const SimulationOptions& options);

}  // namespace gpenkf::mms
