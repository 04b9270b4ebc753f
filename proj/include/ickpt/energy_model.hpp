#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ickpt {

/// Uniformly sampled harvested power, in milliwatts.
struct PowerTrace {
  double sample_period_s = 1e-3;
  std::vector<double> samples_mw;

  std::size_t size() const { return samples_mw.size(); }
  double duration_s() const { return sample_period_s * static_cast<double>(samples_mw.size()); }
  double mean_mw() const;

  /// Throws std::invalid_argument if the period or any sample is invalid.
  void validate() const;
};

/// Strictly increasing set of discrete power levels (mW).
class PowerLevelSet {
public:
  explicit PowerLevelSet(std::vector<double> levels_mw);

  /// {0, 5, 10, 15, 20, 25} mW.
  static PowerLevelSet six_level_rf();

  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t i) const { return levels_[i]; }
  std::span<const double> values() const { return levels_; }

  /// Index of the nearest level; ties go to the lower level.
  std::size_t nearest_index(double power_mw) const;
  /// Index of an exact member, or size() if `power_mw` is not a level.
  std::size_t index_of(double power_mw) const;

private:
  std::vector<double> levels_;
};

/// First-order Markov chain over a PowerLevelSet.
///
/// `probs` is `counts` row-normalized; a row with no observed transitions
/// becomes a self-loop so generation never stalls.
class TransitionModel {
public:
  using Matrix = std::vector<std::vector<double>>;
  using CountMatrix = std::vector<std::vector<std::uint64_t>>;

  TransitionModel(PowerLevelSet levels, CountMatrix counts);

  const PowerLevelSet& levels() const { return levels_; }
  const CountMatrix& counts() const { return counts_; }
  const Matrix& probs() const { return probs_; }
  std::size_t size() const { return levels_.size(); }

  /// Stationary distribution by power iteration.
  std::vector<double> stationary(int iterations = 10000) const;
  /// Mean power of the stationary distribution (mW).
  double stationary_mean_mw() const;

private:
  PowerLevelSet levels_;
  CountMatrix counts_;
  Matrix probs_;
};

PowerTrace quantize_trace(const PowerTrace& trace, const PowerLevelSet& levels);

TransitionModel fit_transitions(const PowerTrace& quantized, const PowerLevelSet& levels);

PowerTrace generate_trace(const TransitionModel& model, std::size_t n_samples, double sample_period_s,
                          std::uint64_t seed, std::size_t initial_level_index);

PowerTrace scale_trace(const PowerTrace& trace, double target_mean_mw);

/// Sticky six-level chain standing in for a measured RF harvesting trace.
TransitionModel default_rf_model();

// File formats: trace CSV `time_s,power_mw`, model JSON with
// `levels_mw`, `counts`, `probs`.
PowerTrace read_trace_csv(std::istream& in);
PowerTrace read_trace_csv(const std::filesystem::path& path);
void write_trace_csv(std::ostream& out, const PowerTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const PowerTrace& trace);

std::string model_to_json(const TransitionModel& model);
TransitionModel model_from_json(const std::string& text);
TransitionModel read_model_json(const std::filesystem::path& path);
void write_model_json(const std::filesystem::path& path, const TransitionModel& model);

}  // namespace ickpt
