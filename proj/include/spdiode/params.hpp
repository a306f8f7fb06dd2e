#pragma once
// Device parameter set and drive state.
//
// Units are carried in field names where they are not obvious: lengths in nm,
// voltages in V (except emitter.v_res_mV), currents in mA, rates in 1/ns,
// times in ns unless suffixed _ps.

#include <string>
#include <vector>

namespace spdiode {

struct Mechanics {
  double rest_gap_nm = 0.0;            // d0
  double builtin_voltage_V = 0.0;      // V_bi of the actuation junction
  double stiffness_V2_per_nm3 = 0.0;   // k / (eps * A)

  bool operator==(const Mechanics&) const = default;
};

struct BandEdgeMode {
  double offset_nm = 0.0;   // relative to the AS mode
  double amplitude = 0.0;   // relative to the AS mode amplitude

  bool operator==(const BandEdgeMode&) const = default;
};

struct Optics {
  double lambda0_nm = 0.0;             // uncoupled slab resonance
  double splitting_at_rest_nm = 0.0;   // s0 = s(d0)
  double coupling_length_nm = 0.0;     // L_c
  double quality_factor = 0.0;
  double thermal_coeff_nm_per_mA = 0.0;
  double reference_current_mA = 0.0;
  std::vector<BandEdgeMode> band_edge_modes;

  bool operator==(const Optics&) const = default;
};

struct Crosstalk {
  double current_at_vref_mA = 0.0;
  double current_at_vlow_mA = 0.0;
  double vref_V = 0.0;
  double vlow_V = 0.0;

  bool operator==(const Crosstalk&) const = default;
};

// QD-diode injection and electrical parasitics.
struct Diode {
  double drive_ref_V = 0.0;        // bias at which the nominal current equals crosstalk.current_at_vref_mA
  double drive_exponent = 0.0;
  double series_resistance_ohm = 0.0;
  double capacitance_F = 0.0;

  bool operator==(const Diode&) const = default;
};

// Additional exciton lines that Stark-shift but sit away from the cavity.
struct ExtraLine {
  double offset_nm = 0.0;              // from lambda_x_at_res_nm at v_res
  double stark_slope_nm_per_V = 0.0;
  double amplitude = 0.0;

  bool operator==(const ExtraLine&) const = default;
};

struct Emitter {
  double lambda_x_at_res_nm = 0.0;
  double v_res_mV = 0.0;
  double stark_slope_nm_per_V = 0.0;
  double tau_bulk_ns = 0.0;
  double tau_leaky_ns = 0.0;
  double tau_resonant_ns = 0.0;        // on-resonance total lifetime target
  double v_th_V = 0.0;
  double tunnel_prefactor_per_ns = 0.0;
  double tunnel_scale_V = 0.0;
  double enhancement_exponent = 0.0;
  double enhancement_max = 0.0;
  double linewidth_nm = 0.0;
  double dark_fraction = 0.0;
  double flip_bright_to_dark_per_ns = 0.0;
  double flip_dark_to_bright_per_ns = 0.0;
  std::vector<ExtraLine> extra_lines;

  bool operator==(const Emitter&) const = default;
};

struct Source {
  double pump_rate_per_ns = 0.0;
  double background_fraction = 0.0;

  bool operator==(const Source&) const = default;
};

struct Detector {
  double efficiency = 0.0;
  double dark_rate_Hz = 0.0;
  double jitter_ps = 0.0;
  bool jitter_is_fwhm = true;
  double dead_time_ns = 0.0;

  bool operator==(const Detector&) const = default;
};

struct CorrelatorSettings {
  double bin_width_ps = 0.0;
  double window_ns = 0.0;

  bool operator==(const CorrelatorSettings&) const = default;
};

struct Filter {
  double center_nm = 0.0;
  double fwhm_nm = 0.0;

  bool operator==(const Filter&) const = default;
};

struct SpectraSettings {
  double counts_scale = 0.0;           // counts/s per unit relative amplitude
  double mode_amplitude_S = 0.0;
  double mode_amplitude_AS = 0.0;
  double exciton_amplitude = 0.0;
  double background = 0.0;

  bool operator==(const SpectraSettings&) const = default;
};

struct Search {
  double v_max_V = 0.0;

  bool operator==(const Search&) const = default;
};

struct DeviceParams {
  Mechanics mech;
  Optics optics;
  Crosstalk crosstalk;
  Diode diode;
  Emitter emitter;
  Source source;
  Detector detector;
  CorrelatorSettings correlator;
  Filter filter;
  SpectraSettings spectra;
  Search search;

  bool operator==(const DeviceParams&) const = default;
};

struct DriveState {
  double v_cav = 0.0;
  double v_qd = 0.0;
  double i_qd_mA = 0.0;

  bool operator==(const DriveState&) const = default;
};

enum class Mode { S, AS };

}  // namespace spdiode
