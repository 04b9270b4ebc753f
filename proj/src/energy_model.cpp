#include "ickpt/energy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ickpt/rng.hpp"
#include "ickpt/text.hpp"

namespace ickpt {

using nlohmann::json;

double PowerTrace::mean_mw() const {
  if (samples_mw.empty()) return 0.0;
  return std::accumulate(samples_mw.begin(), samples_mw.end(), 0.0) /
         static_cast<double>(samples_mw.size());
}

void PowerTrace::validate() const {
  if (!(sample_period_s > 0.0) || !std::isfinite(sample_period_s))
    throw std::invalid_argument("sample period must be positive");
  for (std::size_t i = 0; i < samples_mw.size(); ++i) {
    if (!(samples_mw[i] >= 0.0) || !std::isfinite(samples_mw[i]))
      throw std::invalid_argument("negative or non-finite power at sample " + std::to_string(i));
  }
}

PowerLevelSet::PowerLevelSet(std::vector<double> levels_mw) : levels_(std::move(levels_mw)) {
  if (levels_.size() < 2) throw std::invalid_argument("level set needs at least 2 levels");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (!(levels_[i] >= 0.0) || !std::isfinite(levels_[i]))
      throw std::invalid_argument("levels must be finite and non-negative");
    if (i > 0 && !(levels_[i] > levels_[i - 1]))
      throw std::invalid_argument("levels must be strictly increasing");
  }
}

PowerLevelSet PowerLevelSet::six_level_rf() { return PowerLevelSet({0.0, 5.0, 10.0, 15.0, 20.0, 25.0}); }

std::size_t PowerLevelSet::nearest_index(double power_mw) const {
  std::size_t best = 0;
  double best_dist = std::abs(power_mw - levels_[0]);
  for (std::size_t i = 1; i < levels_.size(); ++i) {
    const double d = std::abs(power_mw - levels_[i]);
    if (d < best_dist) {  // strict: equal distance keeps the lower level
      best = i;
      best_dist = d;
    }
  }
  return best;
}

std::size_t PowerLevelSet::index_of(double power_mw) const {
  auto it = std::lower_bound(levels_.begin(), levels_.end(), power_mw);
  if (it != levels_.end() && *it == power_mw) return static_cast<std::size_t>(it - levels_.begin());
  return levels_.size();
}

TransitionModel::TransitionModel(PowerLevelSet levels, CountMatrix counts)
    : levels_(std::move(levels)), counts_(std::move(counts)) {
  const std::size_t k = levels_.size();
  if (counts_.size() != k) throw std::invalid_argument("count matrix must be K x K");
  probs_.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    if (counts_[i].size() != k) throw std::invalid_argument("count matrix must be K x K");
    const std::uint64_t total = std::accumulate(counts_[i].begin(), counts_[i].end(), std::uint64_t{0});
    if (total == 0) {
      probs_[i][i] = 1.0;
      continue;
    }
    for (std::size_t j = 0; j < k; ++j)
      probs_[i][j] = static_cast<double>(counts_[i][j]) / static_cast<double>(total);
  }
}

std::vector<double> TransitionModel::stationary(int iterations) const {
  const std::size_t k = size();
  std::vector<double> pi(k, 1.0 / static_cast<double>(k)), next(k);
  for (int it = 0; it < iterations; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) next[j] += pi[i] * probs_[i][j];
    double diff = 0.0;
    for (std::size_t j = 0; j < k; ++j) diff = std::max(diff, std::abs(next[j] - pi[j]));
    pi.swap(next);
    if (diff < 1e-15) break;
  }
  return pi;
}

double TransitionModel::stationary_mean_mw() const {
  const auto pi = stationary();
  double mean = 0.0;
  for (std::size_t i = 0; i < size(); ++i) mean += pi[i] * levels_[i];
  return mean;
}

PowerTrace quantize_trace(const PowerTrace& trace, const PowerLevelSet& levels) {
  if (trace.samples_mw.empty()) throw std::invalid_argument("empty trace");
  trace.validate();
  PowerTrace out;
  out.sample_period_s = trace.sample_period_s;
  out.samples_mw.reserve(trace.size());
  for (double v : trace.samples_mw) out.samples_mw.push_back(levels[levels.nearest_index(v)]);
  return out;
}

TransitionModel fit_transitions(const PowerTrace& quantized, const PowerLevelSet& levels) {
  if (quantized.size() < 2) throw std::invalid_argument("trace needs at least 2 samples to fit transitions");
  const std::size_t k = levels.size();
  TransitionModel::CountMatrix counts(k, std::vector<std::uint64_t>(k, 0));
  std::vector<std::size_t> idx(quantized.size());
  for (std::size_t t = 0; t < quantized.size(); ++t) {
    idx[t] = levels.index_of(quantized.samples_mw[t]);
    if (idx[t] == k) throw std::invalid_argument("unquantized sample at index " + std::to_string(t));
  }
  for (std::size_t t = 0; t + 1 < idx.size(); ++t) ++counts[idx[t]][idx[t + 1]];
  return TransitionModel(levels, std::move(counts));
}

PowerTrace generate_trace(const TransitionModel& model, std::size_t n_samples, double sample_period_s,
                          std::uint64_t seed, std::size_t initial_level_index) {
  if (n_samples == 0) throw std::invalid_argument("n_samples must be at least 1");
  if (initial_level_index >= model.size()) throw std::invalid_argument("initial level index out of range");
  if (!(sample_period_s > 0.0)) throw std::invalid_argument("sample period must be positive");

  Rng rng(seed);
  PowerTrace out;
  out.sample_period_s = sample_period_s;
  out.samples_mw.reserve(n_samples);
  std::size_t state = initial_level_index;
  out.samples_mw.push_back(model.levels()[state]);
  const auto& p = model.probs();
  for (std::size_t t = 1; t < n_samples; ++t) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t next = model.size() - 1;
    for (std::size_t j = 0; j < model.size(); ++j) {
      acc += p[state][j];
      if (u < acc) {
        next = j;
        break;
      }
    }
    // rounding in the cumulative sum must not land on a zero-probability level
    while (p[state][next] == 0.0 && next > 0) --next;
    state = next;
    out.samples_mw.push_back(model.levels()[state]);
  }
  return out;
}

PowerTrace scale_trace(const PowerTrace& trace, double target_mean_mw) {
  if (!(target_mean_mw > 0.0)) throw std::invalid_argument("target mean power must be positive");
  const double mean = trace.mean_mw();
  if (!(mean > 0.0)) throw std::invalid_argument("cannot scale zero trace");
  const double factor = target_mean_mw / mean;
  PowerTrace out = trace;
  for (double& v : out.samples_mw) v *= factor;
  return out;
}

TransitionModel default_rf_model() {
  // Sticky nearest-neighbour chain pulled toward the middle levels, meant
  // for 5 ms sampling. Rows sum to 10000.
  TransitionModel::CountMatrix counts = {
      {7600, 2400, 0, 0, 0, 0},
      {600, 7000, 2400, 0, 0, 0},
      {0, 600, 7000, 2400, 0, 0},
      {0, 0, 2400, 7000, 600, 0},
      {0, 0, 0, 2400, 7000, 600},
      {0, 0, 0, 0, 2400, 7600},
  };
  return TransitionModel(PowerLevelSet::six_level_rf(), std::move(counts));
}

PowerTrace read_trace_csv(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) throw std::runtime_error("trace CSV: missing header row");
  ++row;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time_s,power_mw") throw std::runtime_error("trace CSV: expected header 'time_s,power_mw', got '" + line + "'");

  std::vector<double> times, powers;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line, ',');
    if (fields.size() != 2)
      throw std::runtime_error("trace CSV row " + std::to_string(row) + ": expected 2 fields");
    auto t = parse_double(fields[0]);
    if (!t) throw std::runtime_error("trace CSV row " + std::to_string(row) + ": bad time_s");
    auto p = parse_double(fields[1]);
    if (!p) throw std::runtime_error("trace CSV row " + std::to_string(row) + ": bad power_mw");
    if (*p < 0.0) throw std::runtime_error("trace CSV row " + std::to_string(row) + ": negative power_mw");
    times.push_back(*t);
    powers.push_back(*p);
  }
  if (times.size() < 2) throw std::runtime_error("trace CSV: need at least 2 samples");

  std::vector<double> steps;
  steps.reserve(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i) steps.push_back(times[i] - times[i - 1]);
  std::vector<double> sorted = steps;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  if (!(median > 0.0)) throw std::runtime_error("trace CSV: non-increasing time_s");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (std::abs(steps[i] - median) > 0.01 * median)
      throw std::runtime_error("trace CSV row " + std::to_string(i + 3) +
                               ": non-uniform sample spacing (more than 1% from median step)");
  }
  // average step, rounded to 12 significant digits
  const double mean_step = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  std::ostringstream rounded;
  rounded << std::setprecision(12) << mean_step;
  PowerTrace trace;
  trace.sample_period_s = std::stod(rounded.str());
  trace.samples_mw = std::move(powers);
  return trace;
}

PowerTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path.string());
  return read_trace_csv(in);
}

void write_trace_csv(std::ostream& out, const PowerTrace& trace) {
  out << "time_s,power_mw\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << format_double(static_cast<double>(i) * trace.sample_period_s) << ','
        << format_double(trace.samples_mw[i]) << '\n';
}

void write_trace_csv(const std::filesystem::path& path, const PowerTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file " + path.string());
  write_trace_csv(out, trace);
}

std::string model_to_json(const TransitionModel& model) {
  json j;
  j["levels_mw"] = std::vector<double>(model.levels().values().begin(), model.levels().values().end());
  j["counts"] = model.counts();
  j["probs"] = model.probs();
  return j.dump(2) + "\n";
}

TransitionModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("model JSON: ") + e.what());
  }
  for (const char* key : {"levels_mw", "counts"})
    if (!j.contains(key)) throw std::runtime_error(std::string("model JSON: missing field '") + key + "'");
  try {
    PowerLevelSet levels(j.at("levels_mw").get<std::vector<double>>());
    auto counts = j.at("counts").get<TransitionModel::CountMatrix>();
    TransitionModel model(std::move(levels), std::move(counts));
    if (j.contains("probs")) {
      auto probs = j.at("probs").get<TransitionModel::Matrix>();
      if (probs.size() != model.size())
        throw std::runtime_error("model JSON: field 'probs' has wrong shape");
      for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].size() != model.size())
          throw std::runtime_error("model JSON: field 'probs' has wrong shape");
        for (std::size_t k = 0; k < probs[i].size(); ++k)
          if (std::abs(probs[i][k] - model.probs()[i][k]) > 1e-9)
            throw std::runtime_error("model JSON: field 'probs' inconsistent with 'counts' at row " +
                                     std::to_string(i));
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("model JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("model JSON: ") + e.what());
  }
}

TransitionModel read_model_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

void write_model_json(const std::filesystem::path& path, const TransitionModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out << model_to_json(model);
}

}  // namespace ickpt
