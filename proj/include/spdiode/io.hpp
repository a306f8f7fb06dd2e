#pragma once
// Plain-text and binary file formats shared by the CLI and tests.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spdiode/estimator.hpp"
#include "spdiode/opfinder.hpp"
#include "spdiode/photostats.hpp"
#include "spdiode/spectra.hpp"

namespace spdiode::io {

/// Locale-independent, 9 significant digits, shortest form. NaN -> "nan".
std::string fmt(double v);

/// Serializes with every floating value rounded to 9 significant digits.
std::string dump_json(const nlohmann::ordered_json& j);

/// Writes through a temporary sibling file and renames it into place.
void atomic_write(const std::filesystem::path& path, std::string_view data);
std::string read_file(const std::filesystem::path& path);

std::string spectrum_csv(const spectra::Spectrum& s);
std::string sweep_csv(const spectra::SweepTable& t);
std::string map_csv(const std::vector<opfinder::OperatingPoint>& rows);
std::string g2_csv(const photostats::G2Curve& c);
std::string trace_csv(const photostats::DecayTrace& t);

nlohmann::ordered_json spectrum_json(const spectra::Spectrum& s);
nlohmann::ordered_json sweep_json(const spectra::SweepTable& t);
nlohmann::ordered_json map_json(const std::vector<opfinder::OperatingPoint>& rows);
nlohmann::ordered_json g2_json(const photostats::G2Curve& c);
nlohmann::ordered_json trace_json(const photostats::DecayTrace& t);

/// Reads the `tau_ps,g2,sigma,counts` layout written by g2_csv.
photostats::G2Curve parse_g2_csv(std::string_view text);
photostats::G2Curve parse_g2_json(const nlohmann::json& j);

/// Time tags: CSV `channel,timestamp_ps` or binary records of one channel
/// byte followed by a little-endian u64 timestamp.
void append_tags_csv(std::string& out, const photostats::TimeTagStream& s);
void append_tags_bin(std::string& out, const photostats::TimeTagStream& s);

nlohmann::ordered_json fit_report(const estimator::FitResult& r);

}  // namespace spdiode::io
