#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ickpt {

/// Raised when a configuration has one or more invalid fields. what()
/// lists every problem, one per line.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

private:
  std::vector<std::string> problems_;
};

struct CipherConfig {
  std::string name = "prince";           // none | prince | aes
  double encrypt_energy_per_block = 1.6;  // nJ per 8-byte block
  std::int64_t extra_latency_cycles = 82;

  static CipherConfig none();
  static CipherConfig prince();
  /// Per-block energy is a calibration constant; only the ordering against
  /// PRINCE is taken from measurement.
  static CipherConfig aes();
  static CipherConfig by_name(const std::string& name);
};

/// Physical constants of the harvesting platform. Field names match the
/// JSON config keys.
struct SystemParams {
  double proc_energy_per_inst = 6.3;        // nJ
  double nvm_read_energy_per_word = 65.16;  // pJ per 4-byte word
  double nvm_write_energy_per_word = 71.78; // pJ per 4-byte word
  double battery_capacity = 2.0;            // uJ
  std::int64_t battery_levels = 20;         // B
  double clock_hz = 1e5;
  double cpi = 1.0;
  std::int64_t interval_insts = 500;  // N
  std::int64_t super_interval = 100;  // S
  std::int64_t rf_bytes = 128;
  std::int64_t pc_bytes = 4;
  std::int64_t cache_line_bytes = 32;
  std::int64_t dcache_bytes = 8192;
  std::int64_t base_cp_latency_cycles = 82;
  double nvm_log_energy_per_interval = 0.0;  // nJ, shadow-memory bookkeeping
  CipherConfig cipher = CipherConfig::prince();

  std::vector<std::string> problems() const;
  /// Throws ConfigError listing every invalid field.
  void validate() const;

  double capacity_nj() const { return battery_capacity * 1e3; }
  double battery_quantum_nj() const { return capacity_nj() / static_cast<double>(battery_levels); }
  /// floor(energy / quantum) clamped to [0, B-1], computed without a
  /// rounded quantum so level(k * quantum) == k for exact inputs.
  int battery_level(double energy_nj) const;
  double cycle_s() const { return 1.0 / clock_hz; }
  double inst_time_s() const { return cpi / clock_hz; }
  /// Processor draw while executing, in mW.
  double run_power_mw() const { return proc_energy_per_inst * clock_hz / cpi * 1e-6; }
  std::size_t state_count() const {
    return static_cast<std::size_t>(super_interval * super_interval * battery_levels);
  }
};

struct ProgramSpec {
  std::string name = "fft";
  std::int64_t total_insts = 50'000;
  std::int64_t dirty_lines_per_cp = 6;

  std::vector<std::string> problems() const;
  void validate() const;
};

struct Cost {
  double energy_nj = 0.0;
  std::int64_t latency_cycles = 0;
};

struct IntervalDemand {
  double energy_nj = 0.0;
  double duration_s = 0.0;
};

std::int64_t checkpoint_bytes(const SystemParams& params, const ProgramSpec& prog);
/// Cost of an encrypted checkpoint of `bytes` bytes.
Cost checkpoint_cost_for_bytes(const SystemParams& params, std::int64_t bytes);
Cost checkpoint_cost(const SystemParams& params, const ProgramSpec& prog);
Cost restore_cost_for_bytes(const SystemParams& params, std::int64_t bytes);
Cost restore_cost(const SystemParams& params, const ProgramSpec& prog);
IntervalDemand interval_demand(const SystemParams& params);
double lookup_energy_per_superinterval(const SystemParams& params);

nlohmann::json to_json(const SystemParams& params);
/// Starts from defaults; unknown keys and bad types are reported together.
SystemParams system_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProgramSpec& prog);
ProgramSpec program_from_json(const nlohmann::json& j);

}  // namespace ickpt
