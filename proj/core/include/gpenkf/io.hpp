#pragma once

// File formats. CSV files carry optional "# key=value" metadata lines before
// the header; JSON documents carry the same pairs in a "meta" object. Doubles
// are written with 17 significant digits so values round-trip exactly.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gpenkf/calibration.hpp"
#include "gpenkf/design.hpp"
#include "gpenkf/enkf.hpp"
#include "gpenkf/gp.hpp"
#include "gpenkf/markers.hpp"
#include "gpenkf/mcmc.hpp"
#include "gpenkf/mms.hpp"

namespace gpenkf::io {

inline constexpr int kBankSchemaVersion = 1;

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct Table {
    Metadata meta;
    std::vector<std::string> header;
    Eigen::MatrixXd values;  ///< one row per data line

    Eigen::Index column(const std::string& name) const;  ///< throws FormatError if absent
};

std::string format_double(double v);

/// NaN is written as "nan" and read back as NaN.
std::string table_to_csv(const Table& t);
Table table_from_csv(const std::string& text);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Members as rows with one column per parameter name.
Table ensemble_table(const Ensemble& e, const Metadata& meta = {});
Ensemble ensemble_from_table(const Table& t, const ParameterSpace& space);

std::string gaussian_to_json(const GaussianSummary& g, const std::vector<std::string>& names, const Metadata& meta = {});
GaussianSummary gaussian_from_json(const std::string& text);

/// {"labels", "y", "noise_cov"}; readers also accept "noise_sd" for a diagonal R.
std::string observations_to_json(const ObservationSet& obs, const Metadata& meta = {});
ObservationSet observations_from_json(const std::string& text);

std::string bank_to_json(const gp::EmulatorBank& bank, const Metadata& meta = {});
gp::EmulatorBank bank_from_json(const std::string& text);

/// Columns time, then v@node for every recorded node.
Table trace_table(const mms::SimulationTrace& trace, const Metadata& meta = {});

/// Columns node, x, lat_s1, lat_s2, apd_s2, capture.
Table markers_table(const mms::BeatMarkers& markers, const mms::Geometry& geometry, const Metadata& meta = {});

/// Parameter and output tables keyed by the design id, plus a manifest.
struct EnsembleFiles {
    Table params;
    Table outputs;
    std::string manifest;  ///< JSON
};

EnsembleFiles training_ensemble_files(const design::TrainingEnsemble& e, const Metadata& meta,
                                      const std::string& extra_manifest_json = "{}");

/// Rebuilds survivors and the split from the two tables and the manifest.
design::TrainingEnsemble training_ensemble_from_files(const Table& params, const Table& outputs,
                                                      const std::string& manifest);

std::string enkf_result_to_json(const EnkfResult& r, const std::vector<std::string>& names, const Metadata& meta = {});

std::string mcmc_diagnostics_to_json(const McmcResult& r, const std::vector<std::string>& names,
                                     const Metadata& meta = {});

/// Reads the metadata pairs of a CSV ("# key=value" lines) or JSON ("meta") file.
Metadata read_metadata(const std::filesystem::path& path);

}  // namespace gpenkf::io
