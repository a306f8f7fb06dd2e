#pragma once
// Configuration schema, JSON load/save and closed-form calibration.

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "spdiode/params.hpp"

namespace spdiode::cfg {

/// Parse and validate a JSON document. Unknown keys and missing keys are
/// errors; the message names the offending dotted path.
DeviceParams parse_config(std::string_view json_text);

/// Read `path` and parse it. Throws ConfigError on I/O, syntax or validation
/// failure.
DeviceParams load_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const DeviceParams& p);
std::string dump_config(const DeviceParams& p);
void save_config(const DeviceParams& p, const std::filesystem::path& path);

/// Throws ConfigError naming the first violated invariant.
void validate(const DeviceParams& p);

/// The shipped `paper_device` preset (compiled in from configs/paper_device.json).
const DeviceParams& paper_device();
std::string_view paper_device_json();

struct SplittingLaw {
  double s0_nm;
  double coupling_length_nm;
};

/// Exponential splitting law s(d) = s0 exp(-(d - d_a)/L_c) through two
/// (gap, splitting) anchors; s0 is the splitting at the first anchor gap.
SplittingLaw calibrate_splitting(std::pair<double, double> anchor_a,
                                 std::pair<double, double> anchor_b);

/// Linear thermal coefficient (nm/mA) from a current change and the
/// wavelength shift it produced.
double calibrate_thermal(double delta_current_mA, double delta_lambda_nm);

/// Spring constant (V^2 nm^-3) placing the equilibrium gap at `gap_nm` when
/// the effective junction voltage is `v_eff`.
double calibrate_stiffness(double rest_gap_nm, double v_eff, double gap_nm);

/// Maximum cavity-channel rate (1/ns) giving total lifetime `tau_resonant_ns`
/// on resonance with a leaky channel and no tunneling.
double calibrate_purcell_max(double tau_resonant_ns, double tau_leaky_ns);

}  // namespace spdiode::cfg
