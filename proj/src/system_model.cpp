#include "ickpt/system_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace ickpt {

using nlohmann::json;

namespace {

std::string join_lines(const std::vector<std::string>& items) {
  std::string out = "invalid configuration:";
  for (const auto& s : items) out += "\n  " + s;
  return out;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Reads the keys of `j` into fields via per-key setters, collecting every
// unknown key and type error instead of stopping at the first.
using Setter = std::function<void(const json&)>;

void apply_fields(const json& j, const std::string& where, const std::map<std::string, Setter>& setters,
                  std::vector<std::string>& problems) {
  if (!j.is_object()) {
    problems.push_back(where + ": expected a JSON object");
    return;
  }
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      problems.push_back(where + key + ": unknown key");
      continue;
    }
    try {
      it->second(value);
    } catch (const json::exception&) {
      problems.push_back(where + key + ": wrong type (" + std::string(value.type_name()) + ")");
    } catch (const std::exception& e) {
      problems.push_back(where + key + ": " + e.what());
    }
  }
}

template <class T>
Setter set(T& field) {
  return [&field](const json& v) {
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw json::type_error::create(302, "integer expected", &v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw json::type_error::create(302, "number expected", &v);
    }
    field = v.get<T>();
  };
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

CipherConfig CipherConfig::none() { return {"none", 0.0, 0}; }
CipherConfig CipherConfig::prince() { return {"prince", 1.6, 82}; }
CipherConfig CipherConfig::aes() { return {"aes", 9.8, 82}; }

CipherConfig CipherConfig::by_name(const std::string& name) {
  if (name == "none") return none();
  if (name == "prince") return prince();
  if (name == "aes") return aes();
  throw std::invalid_argument("unknown cipher '" + name + "' (expected none, prince or aes)");
}

std::vector<std::string> SystemParams::problems() const {
  std::vector<std::string> p;
  auto positive = [&p](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) p.push_back(std::string(name) + ": must be positive");
  };
  positive(proc_energy_per_inst, "proc_energy_per_inst");
  positive(nvm_read_energy_per_word, "nvm_read_energy_per_word");
  positive(nvm_write_energy_per_word, "nvm_write_energy_per_word");
  positive(battery_capacity, "battery_capacity");
  positive(clock_hz, "clock_hz");
  positive(cpi, "cpi");
  if (battery_levels < 2) p.push_back("battery_levels: must be at least 2");
  if (super_interval < 2) p.push_back("super_interval: must be at least 2");
  if (interval_insts < 1) p.push_back("interval_insts: must be at least 1");
  if (rf_bytes < 1) p.push_back("rf_bytes: must be positive");
  if (pc_bytes < 1) p.push_back("pc_bytes: must be positive");
  if (cache_line_bytes < 1) p.push_back("cache_line_bytes: must be positive");
  if (dcache_bytes < cache_line_bytes) p.push_back("dcache_bytes: must hold at least one cache line");
  if (base_cp_latency_cycles < 0) p.push_back("base_cp_latency_cycles: must be non-negative");
  if (!(nvm_log_energy_per_interval >= 0.0)) p.push_back("nvm_log_energy_per_interval: must be non-negative");
  if (cipher.name != "none" && cipher.name != "prince" && cipher.name != "aes")
    p.push_back("cipher.name: must be none, prince or aes");
  if (!(cipher.encrypt_energy_per_block >= 0.0)) p.push_back("cipher.encrypt_energy_per_block: must be non-negative");
  if (cipher.extra_latency_cycles < 0) p.push_back("cipher.extra_latency_cycles: must be non-negative");
  return p;
}

void SystemParams::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

int SystemParams::battery_level(double energy_nj) const {
  if (!(energy_nj > 0.0)) return 0;
  const double scaled = energy_nj * static_cast<double>(battery_levels) / capacity_nj();
  const auto level = static_cast<std::int64_t>(std::floor(scaled));
  return static_cast<int>(std::clamp<std::int64_t>(level, 0, battery_levels - 1));
}

std::vector<std::string> ProgramSpec::problems() const {
  std::vector<std::string> p;
  if (total_insts < 1) p.push_back("program.total_insts: must be at least 1");
  if (dirty_lines_per_cp < 0) p.push_back("program.dirty_lines_per_cp: must be non-negative");
  return p;
}

void ProgramSpec::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

std::int64_t checkpoint_bytes(const SystemParams& params, const ProgramSpec& prog) {
  return params.pc_bytes + params.rf_bytes + prog.dirty_lines_per_cp * params.cache_line_bytes;
}

Cost checkpoint_cost_for_bytes(const SystemParams& params, std::int64_t bytes) {
  Cost c;
  c.energy_nj = static_cast<double>(ceil_div(bytes, 8)) * params.cipher.encrypt_energy_per_block +
                static_cast<double>(ceil_div(bytes, 4)) * params.nvm_write_energy_per_word * 1e-3;
  c.latency_cycles = params.base_cp_latency_cycles + params.cipher.extra_latency_cycles;
  return c;
}

Cost checkpoint_cost(const SystemParams& params, const ProgramSpec& prog) {
  return checkpoint_cost_for_bytes(params, checkpoint_bytes(params, prog));
}

Cost restore_cost_for_bytes(const SystemParams& params, std::int64_t bytes) {
  // decryption is charged at the encryption rate
  Cost c;
  c.energy_nj = static_cast<double>(ceil_div(bytes, 4)) * params.nvm_read_energy_per_word * 1e-3 +
                static_cast<double>(ceil_div(bytes, 8)) * params.cipher.encrypt_energy_per_block;
  c.latency_cycles = params.base_cp_latency_cycles + params.cipher.extra_latency_cycles;
  return c;
}

Cost restore_cost(const SystemParams& params, const ProgramSpec& prog) {
  return restore_cost_for_bytes(params, checkpoint_bytes(params, prog));
}

IntervalDemand interval_demand(const SystemParams& params) {
  const auto n = static_cast<double>(params.interval_insts);
  return {n * params.proc_energy_per_inst, n * params.cpi / params.clock_hz};
}

double lookup_energy_per_superinterval(const SystemParams& params) {
  return static_cast<double>(params.super_interval) * params.nvm_read_energy_per_word * 1e-3;
}

json to_json(const SystemParams& p) {
  return json{
      {"proc_energy_per_inst", p.proc_energy_per_inst},
      {"nvm_read_energy_per_word", p.nvm_read_energy_per_word},
      {"nvm_write_energy_per_word", p.nvm_write_energy_per_word},
      {"battery_capacity", p.battery_capacity},
      {"battery_levels", p.battery_levels},
      {"clock_hz", p.clock_hz},
      {"cpi", p.cpi},
      {"interval_insts", p.interval_insts},
      {"super_interval", p.super_interval},
      {"rf_bytes", p.rf_bytes},
      {"pc_bytes", p.pc_bytes},
      {"cache_line_bytes", p.cache_line_bytes},
      {"dcache_bytes", p.dcache_bytes},
      {"base_cp_latency_cycles", p.base_cp_latency_cycles},
      {"nvm_log_energy_per_interval", p.nvm_log_energy_per_interval},
      {"cipher",
       {{"name", p.cipher.name},
        {"encrypt_energy_per_block", p.cipher.encrypt_energy_per_block},
        {"extra_latency_cycles", p.cipher.extra_latency_cycles}}},
  };
}

SystemParams system_params_from_json(const json& j) {
  SystemParams p;
  std::vector<std::string> problems;
  // A cipher object may name a preset and override individual fields.
  Setter cipher_setter = [&p, &problems](const json& c) {
    if (c.is_object() && c.contains("name") && c.at("name").is_string()) {
      try {
        p.cipher = CipherConfig::by_name(c.at("name").get<std::string>());
      } catch (const std::invalid_argument&) {
        // reported by SystemParams::problems()
      }
    }
    apply_fields(c, "cipher.",
                 {{"name", set(p.cipher.name)},
                  {"encrypt_energy_per_block", set(p.cipher.encrypt_energy_per_block)},
                  {"extra_latency_cycles", set(p.cipher.extra_latency_cycles)}},
                 problems);
  };
  apply_fields(j, "",
               {{"proc_energy_per_inst", set(p.proc_energy_per_inst)},
                {"nvm_read_energy_per_word", set(p.nvm_read_energy_per_word)},
                {"nvm_write_energy_per_word", set(p.nvm_write_energy_per_word)},
                {"battery_capacity", set(p.battery_capacity)},
                {"battery_levels", set(p.battery_levels)},
                {"clock_hz", set(p.clock_hz)},
                {"cpi", set(p.cpi)},
                {"interval_insts", set(p.interval_insts)},
                {"super_interval", set(p.super_interval)},
                {"rf_bytes", set(p.rf_bytes)},
                {"pc_bytes", set(p.pc_bytes)},
                {"cache_line_bytes", set(p.cache_line_bytes)},
                {"dcache_bytes", set(p.dcache_bytes)},
                {"base_cp_latency_cycles", set(p.base_cp_latency_cycles)},
                {"nvm_log_energy_per_interval", set(p.nvm_log_energy_per_interval)},
                {"cipher", cipher_setter}},
               problems);
  for (auto& s : p.problems()) problems.push_back(std::move(s));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return p;
}

json to_json(const ProgramSpec& prog) {
  return json{{"name", prog.name}, {"total_insts", prog.total_insts}, {"dirty_lines_per_cp", prog.dirty_lines_per_cp}};
}

ProgramSpec program_from_json(const json& j) {
  ProgramSpec prog;
  std::vector<std::string> problems;
  apply_fields(j, "program.",
               {{"name", set(prog.name)},
                {"total_insts", set(prog.total_insts)},
                {"dirty_lines_per_cp", set(prog.dirty_lines_per_cp)}},
               problems);
  for (auto& s : prog.problems()) problems.push_back(std::move(s));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return prog;
}

}  // namespace ickpt
