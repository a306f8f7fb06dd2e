#include "spdiode/devicecfg.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "spdiode/errors.hpp"
#include "paper_device_json.hpp"

namespace spdiode::cfg {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Walks one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  double number(const char* key) {
    const json& v = get(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(child(key), "must be finite");
    return x;
  }

  bool boolean(const char* key) {
    const json& v = get(key);
    if (!v.is_boolean()) throw ConfigError(child(key), "expected true or false");
    return v.get<bool>();
  }

  const json& array(const char* key) {
    const json& v = get(key);
    if (!v.is_array()) throw ConfigError(child(key), "expected an array");
    return v;
  }

  ObjectReader object(const char* key) { return ObjectReader(get(key), child(key)); }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
    }
  }

 private:
  const json& get(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw ConfigError(child(key), "missing key");
    seen_.insert(key);
    return *it;
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

DeviceParams from_json(const json& root) {
  DeviceParams p;
  ObjectReader r(root, "");

  {
    auto m = r.object("mechanics");
    p.mech.rest_gap_nm = m.number("rest_gap_nm");
    p.mech.builtin_voltage_V = m.number("builtin_voltage_V");
    p.mech.stiffness_V2_per_nm3 = m.number("stiffness_V2_per_nm3");
    m.finish();
  }
  {
    auto o = r.object("optics");
    p.optics.lambda0_nm = o.number("lambda0_nm");
    p.optics.splitting_at_rest_nm = o.number("splitting_at_rest_nm");
    p.optics.coupling_length_nm = o.number("coupling_length_nm");
    p.optics.quality_factor = o.number("quality_factor");
    p.optics.thermal_coeff_nm_per_mA = o.number("thermal_coeff_nm_per_mA");
    p.optics.reference_current_mA = o.number("reference_current_mA");
    const json& modes = o.array("band_edge_modes");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      ObjectReader b(modes[i], o.child("band_edge_modes[" + std::to_string(i) + "]"));
      p.optics.band_edge_modes.push_back({b.number("offset_nm"), b.number("amplitude")});
      b.finish();
    }
    o.finish();
  }
  {
    auto c = r.object("crosstalk");
    p.crosstalk.current_at_vref_mA = c.number("current_at_vref_mA");
    p.crosstalk.current_at_vlow_mA = c.number("current_at_vlow_mA");
    p.crosstalk.vref_V = c.number("vref_V");
    p.crosstalk.vlow_V = c.number("vlow_V");
    c.finish();
  }
  {
    auto d = r.object("diode");
    p.diode.drive_ref_V = d.number("drive_ref_V");
    p.diode.drive_exponent = d.number("drive_exponent");
    p.diode.series_resistance_ohm = d.number("series_resistance_ohm");
    p.diode.capacitance_F = d.number("capacitance_F");
    d.finish();
  }
  {
    auto e = r.object("emitter");
    auto& em = p.emitter;
    em.lambda_x_at_res_nm = e.number("lambda_x_at_res_nm");
    em.v_res_mV = e.number("v_res_mV");
    em.stark_slope_nm_per_V = e.number("stark_slope_nm_per_V");
    em.tau_bulk_ns = e.number("tau_bulk_ns");
    em.tau_leaky_ns = e.number("tau_leaky_ns");
    em.tau_resonant_ns = e.number("tau_resonant_ns");
    em.v_th_V = e.number("v_th_V");
    em.tunnel_prefactor_per_ns = e.number("tunnel_prefactor_per_ns");
    em.tunnel_scale_V = e.number("tunnel_scale_V");
    em.enhancement_exponent = e.number("enhancement_exponent");
    em.enhancement_max = e.number("enhancement_max");
    em.linewidth_nm = e.number("linewidth_nm");
    em.dark_fraction = e.number("dark_fraction");
    em.flip_bright_to_dark_per_ns = e.number("flip_bright_to_dark_per_ns");
    em.flip_dark_to_bright_per_ns = e.number("flip_dark_to_bright_per_ns");
    const json& lines = e.array("extra_lines");
    for (std::size_t i = 0; i < lines.size(); ++i) {
      ObjectReader l(lines[i], e.child("extra_lines[" + std::to_string(i) + "]"));
      em.extra_lines.push_back(
          {l.number("offset_nm"), l.number("stark_slope_nm_per_V"), l.number("amplitude")});
      l.finish();
    }
    e.finish();
  }
  {
    auto s = r.object("source");
    p.source.pump_rate_per_ns = s.number("pump_rate_per_ns");
    p.source.background_fraction = s.number("background_fraction");
    s.finish();
  }
  {
    auto d = r.object("detector");
    p.detector.efficiency = d.number("efficiency");
    p.detector.dark_rate_Hz = d.number("dark_rate_Hz");
    p.detector.jitter_ps = d.number("jitter_ps");
    p.detector.jitter_is_fwhm = d.boolean("jitter_is_fwhm");
    p.detector.dead_time_ns = d.number("dead_time_ns");
    d.finish();
  }
  {
    auto c = r.object("correlator");
    p.correlator.bin_width_ps = c.number("bin_width_ps");
    p.correlator.window_ns = c.number("window_ns");
    c.finish();
  }
  {
    auto f = r.object("filter");
    p.filter.center_nm = f.number("center_nm");
    p.filter.fwhm_nm = f.number("fwhm_nm");
    f.finish();
  }
  {
    auto s = r.object("spectra");
    p.spectra.counts_scale = s.number("counts_scale");
    p.spectra.mode_amplitude_S = s.number("mode_amplitude_S");
    p.spectra.mode_amplitude_AS = s.number("mode_amplitude_AS");
    p.spectra.exciton_amplitude = s.number("exciton_amplitude");
    p.spectra.background = s.number("background");
    s.finish();
  }
  {
    auto s = r.object("search");
    p.search.v_max_V = s.number("v_max_V");
    s.finish();
  }
  r.finish();
  return p;
}

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

void validate(const DeviceParams& p) {
  require(p.mech.rest_gap_nm > 0, "mechanics.rest_gap_nm", "must be > 0");
  require(p.mech.stiffness_V2_per_nm3 > 0, "mechanics.stiffness_V2_per_nm3", "must be > 0");

  require(p.optics.lambda0_nm > 0, "optics.lambda0_nm", "must be > 0");
  require(p.optics.splitting_at_rest_nm > 0, "optics.splitting_at_rest_nm", "must be > 0");
  require(p.optics.coupling_length_nm > 0, "optics.coupling_length_nm", "must be > 0");
  require(p.optics.quality_factor > 0, "optics.quality_factor", "must be > 0");
  require(p.optics.reference_current_mA >= 0, "optics.reference_current_mA", "must be >= 0");

  require(p.crosstalk.current_at_vlow_mA >= 0, "crosstalk.current_at_vlow_mA", "must be >= 0");
  require(p.crosstalk.current_at_vref_mA >= p.crosstalk.current_at_vlow_mA,
          "crosstalk.current_at_vref_mA", "must be >= current_at_vlow_mA");
  require(p.crosstalk.vref_V != p.crosstalk.vlow_V, "crosstalk.vlow_V", "must differ from vref_V");

  require(p.diode.drive_ref_V > p.emitter.v_th_V, "diode.drive_ref_V", "must exceed emitter.v_th_V");
  require(p.diode.drive_exponent > 0, "diode.drive_exponent", "must be > 0");
  require(p.diode.series_resistance_ohm > 0, "diode.series_resistance_ohm", "must be > 0");
  require(p.diode.capacitance_F > 0, "diode.capacitance_F", "must be > 0");

  const auto& e = p.emitter;
  require(e.lambda_x_at_res_nm > 0, "emitter.lambda_x_at_res_nm", "must be > 0");
  require(e.tau_bulk_ns > 0, "emitter.tau_bulk_ns", "must be > 0");
  require(e.tau_leaky_ns > 0, "emitter.tau_leaky_ns", "must be > 0");
  require(e.tau_resonant_ns > 0 && e.tau_resonant_ns < e.tau_leaky_ns, "emitter.tau_resonant_ns",
          "must be in (0, tau_leaky_ns)");
  require(e.tunnel_prefactor_per_ns >= 0, "emitter.tunnel_prefactor_per_ns", "must be >= 0");
  require(e.tunnel_scale_V > 0, "emitter.tunnel_scale_V", "must be > 0");
  require(e.enhancement_exponent > 0, "emitter.enhancement_exponent", "must be > 0");
  require(e.enhancement_max >= 1, "emitter.enhancement_max", "must be >= 1");
  require(e.linewidth_nm > 0, "emitter.linewidth_nm", "must be > 0");
  require(e.dark_fraction >= 0 && e.dark_fraction <= 1, "emitter.dark_fraction", "must be in [0, 1]");
  require(e.flip_bright_to_dark_per_ns >= 0, "emitter.flip_bright_to_dark_per_ns", "must be >= 0");
  require(e.flip_dark_to_bright_per_ns >= 0, "emitter.flip_dark_to_bright_per_ns", "must be >= 0");

  require(p.source.pump_rate_per_ns >= 0, "source.pump_rate_per_ns", "must be >= 0");
  require(p.source.background_fraction >= 0 && p.source.background_fraction < 1,
          "source.background_fraction", "must be in [0, 1)");

  require(p.detector.efficiency > 0 && p.detector.efficiency <= 1, "detector.efficiency",
          "must be in (0, 1]");
  require(p.detector.dark_rate_Hz >= 0, "detector.dark_rate_Hz", "must be >= 0");
  require(p.detector.jitter_ps >= 0, "detector.jitter_ps", "must be >= 0");
  require(p.detector.dead_time_ns >= 0, "detector.dead_time_ns", "must be >= 0");

  require(p.correlator.bin_width_ps > 0, "correlator.bin_width_ps", "must be > 0");
  require(p.correlator.window_ns * 1000.0 >= p.correlator.bin_width_ps, "correlator.window_ns",
          "must be >= bin width");

  require(p.filter.fwhm_nm > 0, "filter.fwhm_nm", "must be > 0");
  require(p.spectra.counts_scale >= 0, "spectra.counts_scale", "must be >= 0");
  require(p.spectra.background >= 0, "spectra.background", "must be >= 0");
  require(p.search.v_max_V > p.emitter.v_th_V, "search.v_max_V", "must exceed emitter.v_th_V");
}

DeviceParams parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("parse error: ") + e.what());
  }
  DeviceParams p = from_json(root);
  validate(p);
  return p;
}

DeviceParams load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.field(), path.string() + ": " + e.what());
  }
}

ordered_json to_json(const DeviceParams& p) {
  ordered_json j;
  j["mechanics"] = {{"rest_gap_nm", p.mech.rest_gap_nm},
                    {"builtin_voltage_V", p.mech.builtin_voltage_V},
                    {"stiffness_V2_per_nm3", p.mech.stiffness_V2_per_nm3}};

  ordered_json modes = ordered_json::array();
  for (const auto& m : p.optics.band_edge_modes)
    modes.push_back({{"offset_nm", m.offset_nm}, {"amplitude", m.amplitude}});
  j["optics"] = {{"lambda0_nm", p.optics.lambda0_nm},
                 {"splitting_at_rest_nm", p.optics.splitting_at_rest_nm},
                 {"coupling_length_nm", p.optics.coupling_length_nm},
                 {"quality_factor", p.optics.quality_factor},
                 {"thermal_coeff_nm_per_mA", p.optics.thermal_coeff_nm_per_mA},
                 {"reference_current_mA", p.optics.reference_current_mA},
                 {"band_edge_modes", modes}};

  j["crosstalk"] = {{"current_at_vref_mA", p.crosstalk.current_at_vref_mA},
                    {"current_at_vlow_mA", p.crosstalk.current_at_vlow_mA},
                    {"vref_V", p.crosstalk.vref_V},
                    {"vlow_V", p.crosstalk.vlow_V}};

  j["diode"] = {{"drive_ref_V", p.diode.drive_ref_V},
                {"drive_exponent", p.diode.drive_exponent},
                {"series_resistance_ohm", p.diode.series_resistance_ohm},
                {"capacitance_F", p.diode.capacitance_F}};

  const auto& e = p.emitter;
  ordered_json lines = ordered_json::array();
  for (const auto& l : e.extra_lines)
    lines.push_back({{"offset_nm", l.offset_nm},
                     {"stark_slope_nm_per_V", l.stark_slope_nm_per_V},
                     {"amplitude", l.amplitude}});
  j["emitter"] = {{"lambda_x_at_res_nm", e.lambda_x_at_res_nm},
                  {"v_res_mV", e.v_res_mV},
                  {"stark_slope_nm_per_V", e.stark_slope_nm_per_V},
                  {"tau_bulk_ns", e.tau_bulk_ns},
                  {"tau_leaky_ns", e.tau_leaky_ns},
                  {"tau_resonant_ns", e.tau_resonant_ns},
                  {"v_th_V", e.v_th_V},
                  {"tunnel_prefactor_per_ns", e.tunnel_prefactor_per_ns},
                  {"tunnel_scale_V", e.tunnel_scale_V},
                  {"enhancement_exponent", e.enhancement_exponent},
                  {"enhancement_max", e.enhancement_max},
                  {"linewidth_nm", e.linewidth_nm},
                  {"dark_fraction", e.dark_fraction},
                  {"flip_bright_to_dark_per_ns", e.flip_bright_to_dark_per_ns},
                  {"flip_dark_to_bright_per_ns", e.flip_dark_to_bright_per_ns},
                  {"extra_lines", lines}};

  j["source"] = {{"pump_rate_per_ns", p.source.pump_rate_per_ns},
                 {"background_fraction", p.source.background_fraction}};

  j["detector"] = {{"efficiency", p.detector.efficiency},
                   {"dark_rate_Hz", p.detector.dark_rate_Hz},
                   {"jitter_ps", p.detector.jitter_ps},
                   {"jitter_is_fwhm", p.detector.jitter_is_fwhm},
                   {"dead_time_ns", p.detector.dead_time_ns}};

  j["correlator"] = {{"bin_width_ps", p.correlator.bin_width_ps},
                     {"window_ns", p.correlator.window_ns}};
  j["filter"] = {{"center_nm", p.filter.center_nm}, {"fwhm_nm", p.filter.fwhm_nm}};
  j["spectra"] = {{"counts_scale", p.spectra.counts_scale},
                  {"mode_amplitude_S", p.spectra.mode_amplitude_S},
                  {"mode_amplitude_AS", p.spectra.mode_amplitude_AS},
                  {"exciton_amplitude", p.spectra.exciton_amplitude},
                  {"background", p.spectra.background}};
  j["search"] = {{"v_max_V", p.search.v_max_V}};
  return j;
}

std::string dump_config(const DeviceParams& p) { return to_json(p).dump(2) + "\n"; }

void save_config(const DeviceParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("", "cannot write config file '" + path.string() + "'");
  out << dump_config(p);
}

const DeviceParams& paper_device() {
  static const DeviceParams p = parse_config(paper_device_json());
  return p;
}

std::string_view paper_device_json() { return kPaperDeviceJson; }

SplittingLaw calibrate_splitting(std::pair<double, double> anchor_a,
                                 std::pair<double, double> anchor_b) {
  const auto [gap_a, s_a] = anchor_a;
  const auto [gap_b, s_b] = anchor_b;
  if (!(s_a > 0) || !(s_b > 0)) throw NumericError("calibrate_splitting: splittings must be > 0");
  if (gap_a == gap_b) throw NumericError("calibrate_splitting: anchors share the same gap");
  // s_b / s_a = exp(-(gap_b - gap_a) / L)
  const double ratio = std::log(s_b / s_a);
  if (ratio == 0.0)
    throw NumericError("calibrate_splitting: equal splittings at distinct gaps give infinite L_c");
  const double length = -(gap_b - gap_a) / ratio;
  if (!(length > 0))
    throw NumericError("calibrate_splitting: splitting must shrink as the gap grows");
  return {s_a, length};
}

double calibrate_thermal(double delta_current_mA, double delta_lambda_nm) {
  if (delta_current_mA == 0.0) throw NumericError("calibrate_thermal: zero current change");
  return delta_lambda_nm / delta_current_mA;
}

double calibrate_stiffness(double rest_gap_nm, double v_eff, double gap_nm) {
  if (!(gap_nm > 2.0 * rest_gap_nm / 3.0 && gap_nm < rest_gap_nm))
    throw NumericError("calibrate_stiffness: target gap must lie in (2 d0/3, d0)");
  return v_eff * v_eff / (2.0 * gap_nm * gap_nm * (rest_gap_nm - gap_nm));
}

double calibrate_purcell_max(double tau_resonant_ns, double tau_leaky_ns) {
  if (!(tau_resonant_ns > 0) || !(tau_resonant_ns < tau_leaky_ns))
    throw NumericError("calibrate_purcell_max: need 0 < tau_resonant < tau_leaky");
  return 1.0 / tau_resonant_ns - 1.0 / tau_leaky_ns;
}

}  // namespace spdiode::cfg
