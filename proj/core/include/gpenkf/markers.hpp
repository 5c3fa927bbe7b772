#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpenkf/mms.hpp"

namespace gpenkf::mms {

inline constexpr double kActivationThreshold = 0.75;
inline constexpr double kRecoveryFraction = 0.1;

enum class MarkerStatus { Ok, NoCapture, NoRecovery };

const char* to_string(MarkerStatus s) noexcept;

struct Marker {
    double value = 0.0;  ///< ms; meaningful only when status == Ok
    MarkerStatus status = MarkerStatus::NoCapture;

    bool ok() const noexcept { return status == MarkerStatus::Ok; }
};

struct TimeWindow {
    double start;
    double end;  ///< exclusive
};

/// First upward crossing of 0.75 inside the window, linearly interpolated.
Marker extract_lat(std::span<const double> times, std::span<const double> v, TimeWindow window);
Marker extract_lat(const SimulationTrace& trace, TimeWindow window, int node);

/// LRT - LAT, where LRT is the first time after the beat peak at which v
/// falls to 10% of that peak (interpolated).
Marker extract_apd(std::span<const double> times, std::span<const double> v, TimeWindow window);
Marker extract_apd(const SimulationTrace& trace, TimeWindow window, int node);

/// Output types of the S1S2 protocol in flattening order.
enum class OutputType { S1 = 0, S2 = 1, APD = 2 };
inline constexpr std::array<OutputType, 3> kOutputTypes{OutputType::S1, OutputType::S2, OutputType::APD};

const char* to_string(OutputType t) noexcept;

/// Per-node markers of one S1S2 run. Activation times are measured from the
/// onset of the stimulus that triggered the beat; missing entries are NaN.
struct BeatMarkers {
    std::vector<int> nodes;
    Eigen::VectorXd lat_s1;
    Eigen::VectorXd lat_s2;
    Eigen::VectorXd apd_s2;
    std::vector<std::array<bool, 2>> capture;  ///< (S1, S2) per node

    /// (output-type major, node minor): [S1..., S2..., APD...]
    Eigen::VectorXd flatten() const;
    bool complete() const;
    const Eigen::VectorXd& field(OutputType t) const;
};

/// Labels "<type>@<index>" matching BeatMarkers::flatten for `n_sensors`.
std::vector<std::string> output_labels(int n_sensors);

/// Windows used for each marker (absolute trace time).
TimeWindow s1_lat_window(const PacingProtocol& protocol);
TimeWindow s2_lat_window(const PacingProtocol& protocol);

BeatMarkers beat_markers(const SimulationTrace& trace, const PacingProtocol& protocol, std::span<const int> nodes);

/// Runs the protocol and returns markers at the geometry's sensors.
BeatMarkers s1s2_markers(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                         const SimulationOptions& options = {});

/// Flattened 3 x n_sensors output vector; NaN marks missing entries.
Eigen::VectorXd s1s2_outputs(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                             const SimulationOptions& options = {});

/// Sensor outputs together with the full-field markers of the same run.
struct S1S2Run {
    Eigen::VectorXd outputs;  ///< sensors, flattened
    BeatMarkers field;        ///< every node
};

S1S2Run s1s2_run(const TissueParams& p, const Geometry& geometry, const PacingProtocol& protocol,
                 const SimulationOptions& options = {});

struct CellFeasibility {
    bool feasible = false;
    std::string reason;         ///< empty when feasible
    std::vector<double> apd_s1; ///< APD of each S1 beat (NaN if missing)
};

inline constexpr double kMaxFeasibleApd = 500.0;  ///< ms
inline constexpr double kAlternansThreshold = 5.0; ///< ms

/// Cell-level screen: every S1 beat must capture and recover and no APD may
/// exceed 500 ms. Alternans is flagged when the last two S1 APDs differ by
/// more than 5 ms; the first beat starts from full rest and is excluded.
CellFeasibility cell_feasibility(const CellParams& p, const PacingProtocol& protocol = {}, double dt = 0.0);

}  // namespace gpenkf::mms
