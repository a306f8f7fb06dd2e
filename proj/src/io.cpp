#include "spdiode/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "spdiode/errors.hpp"

namespace spdiode::io {

namespace fs = std::filesystem;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return {buf, r.ptr};
}

namespace {

// JSON has no NaN; emit null.
nlohmann::ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

double parse_double(std::string_view s, std::size_t line) {
  if (s == "nan") return std::nan("");
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw NumericError("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

void round_floats(nlohmann::ordered_json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    j = std::stod(fmt(v));
  } else if (j.is_structured()) {
    for (auto& e : j) round_floats(e);
  }
}

}  // namespace

std::string dump_json(const nlohmann::ordered_json& j) {
  auto copy = j;
  round_floats(copy);
  return copy.dump(2) + "\n";
}

void atomic_write(const fs::path& path, std::string_view data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string spectrum_csv(const spectra::Spectrum& s) {
  std::string out = "wavelength_nm,intensity\n";
  for (std::size_t i = 0; i < s.wavelengths.size(); ++i)
    out += fmt(s.wavelengths[i]) + ',' + fmt(s.intensities[i]) + '\n';
  return out;
}

std::string sweep_csv(const spectra::SweepTable& t) {
  std::string out = "V,lambda_S_nm,lambda_AS_nm,lambda_X_nm,detuning_nm\n";
  for (const auto& r : t.rows)
    out += fmt(r.v) + ',' + fmt(r.lambda_S) + ',' + fmt(r.lambda_AS) + ',' + fmt(r.lambda_X) + ',' +
           fmt(r.detuning) + '\n';
  return out;
}

std::string map_csv(const std::vector<opfinder::OperatingPoint>& rows) {
  std::string out = "V_CAV,V_QD,detuning_nm,tau_ns,g2_zero,enhancement\n";
  for (const auto& r : rows)
    out += fmt(r.v_cav) + ',' + fmt(r.v_qd) + ',' + fmt(r.detuning_nm) + ',' + fmt(r.tau_total_ns) +
           ',' + fmt(r.predicted_g2_zero) + ',' + fmt(r.enhancement) + '\n';
  return out;
}

std::string g2_csv(const photostats::G2Curve& c) {
  std::string out = "tau_ps,g2,sigma,counts\n";
  for (std::size_t i = 0; i < c.tau_ps.size(); ++i)
    out += fmt(c.tau_ps[i]) + ',' + fmt(c.g2[i]) + ',' + fmt(c.sigma[i]) + ',' +
           std::to_string(c.counts[i]) + '\n';
  return out;
}

std::string trace_csv(const photostats::DecayTrace& t) {
  std::string out = "t_ps,counts\n";
  for (std::size_t i = 0; i < t.counts.size(); ++i)
    out += fmt(t.center(i)) + ',' + std::to_string(t.counts[i]) + '\n';
  return out;
}

nlohmann::ordered_json spectrum_json(const spectra::Spectrum& s) {
  nlohmann::ordered_json j;
  j["V_CAV"] = s.meta.v_cav;
  j["V_QD"] = s.meta.v_qd;
  j["I_QD_mA"] = s.meta.i_qd_mA;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.wavelengths.size(); ++i)
    rows.push_back({{"wavelength_nm", s.wavelengths[i]}, {"intensity", s.intensities[i]}});
  return j;
}

nlohmann::ordered_json sweep_json(const spectra::SweepTable& t) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"V", r.v},
                    {"lambda_S_nm", num(r.lambda_S)},
                    {"lambda_AS_nm", num(r.lambda_AS)},
                    {"lambda_X_nm", num(r.lambda_X)},
                    {"detuning_nm", num(r.detuning)},
                    {"pulled_in", r.pulled_in}});
  return {{"rows", rows}};
}

nlohmann::ordered_json map_json(const std::vector<opfinder::OperatingPoint>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    arr.push_back({{"V_CAV", r.v_cav},
                   {"V_QD", r.v_qd},
                   {"detuning_nm", num(r.detuning_nm)},
                   {"tau_ns", num(r.tau_total_ns)},
                   {"g2_zero", num(r.predicted_g2_zero)},
                   {"enhancement", num(r.enhancement)},
                   {"pulled_in", r.pulled_in}});
  return {{"rows", arr}};
}

nlohmann::ordered_json g2_json(const photostats::G2Curve& c) {
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < c.tau_ps.size(); ++i)
    rows.push_back({{"tau_ps", c.tau_ps[i]}, {"g2", c.g2[i]}, {"sigma", c.sigma[i]}, {"counts", c.counts[i]}});
  return {{"rows", rows}};
}

nlohmann::ordered_json trace_json(const photostats::DecayTrace& t) {
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < t.counts.size(); ++i) rows.push_back({{"t_ps", t.center(i)}, {"counts", t.counts[i]}});
  return {{"bin_width_ps", t.bin_width_ps}, {"pulses", t.pulses}, {"rows", rows}};
}

photostats::G2Curve parse_g2_csv(std::string_view text) {
  photostats::G2Curve c;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cols = split(line);
    if (header) {
      if (cols.size() != 4 || cols[0] != "tau_ps" || cols[1] != "g2" || cols[2] != "sigma" || cols[3] != "counts")
        throw NumericError("g2 csv: expected header tau_ps,g2,sigma,counts");
      header = false;
      continue;
    }
    if (cols.size() != 4) throw NumericError("g2 csv line " + std::to_string(line_no) + ": expected 4 columns");
    c.tau_ps.push_back(parse_double(cols[0], line_no));
    c.g2.push_back(parse_double(cols[1], line_no));
    c.sigma.push_back(parse_double(cols[2], line_no));
    c.counts.push_back(static_cast<std::uint64_t>(parse_double(cols[3], line_no)));
  }
  if (header) throw NumericError("g2 csv: empty input");
  return c;
}

photostats::G2Curve parse_g2_json(const nlohmann::json& j) {
  photostats::G2Curve c;
  for (const auto& r : j.at("rows")) {
    c.tau_ps.push_back(r.at("tau_ps").get<double>());
    c.g2.push_back(r.at("g2").get<double>());
    c.sigma.push_back(r.at("sigma").get<double>());
    c.counts.push_back(r.at("counts").get<std::uint64_t>());
  }
  return c;
}

void append_tags_csv(std::string& out, const photostats::TimeTagStream& s) {
  const std::string ch = std::to_string(s.channel) + ',';
  for (auto t : s.timestamps) {
    out += ch;
    out += std::to_string(t);
    out += '\n';
  }
}

void append_tags_bin(std::string& out, const photostats::TimeTagStream& s) {
  for (auto t : s.timestamps) {
    out += static_cast<char>(s.channel);
    auto u = static_cast<std::uint64_t>(t);
    for (int b = 0; b < 8; ++b) out += static_cast<char>((u >> (8 * b)) & 0xff);
  }
}

nlohmann::ordered_json fit_report(const estimator::FitResult& r) {
  nlohmann::ordered_json j;
  auto put = [](const std::vector<estimator::Estimate>& v) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : v) arr.push_back({{"name", e.name}, {"value", num(e.value)}, {"std_error", num(e.std_error)}});
    return arr;
  };
  j["params"] = put(r.params);
  j["derived"] = put(r.derived);
  j["residual_norm"] = num(r.residual_norm);
  j["chi2"] = num(r.chi2);
  j["dof"] = r.dof;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace spdiode::io
