// Discrete-event crowd simulator. Synthetic videos with planted unsafe
// segments and synthetic workers with latent accuracy, bias and latency drive
// the engine through its public API.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "crowdmod/config.hpp"
#include "crowdmod/engine.hpp"
#include "crowdmod/metrics.hpp"
#include "json.hpp"

namespace crowdmod::sim {

struct SimWorkerModel {
  double true_accuracy = 0.8;
  /// Probability of answering Yes regardless of content.
  double yes_bias = 0.0;
  /// Lognormal response latency in seconds.
  double latency_mu = std::log(30.0);
  double latency_sigma = 0.8;
  /// Probability that a dispatched worker answers at all.
  double availability = 1.0;

  void validate() const;
};

struct WorkerGroup {
  std::string prefix = "w";
  std::size_t count = 1;
  IdentityClass identity_class = IdentityClass::Signed;
  std::string locale = "en-US";
  SimWorkerModel model;
};

struct SimStreamModel {
  /// Videos per second (Poisson arrivals).
  double video_arrival_rate = 1.0 / 900.0;
  /// Uniform duration range in seconds; equal bounds give a fixed duration.
  double duration_min_s = 60.0;
  double duration_max_s = 600.0;
  double unsafe_segment_rate = 0.1;
  std::vector<std::pair<std::string, double>> locale_mix{{"en-US", 1.0}};
  std::size_t max_videos = 100;

  void validate() const;
};

struct Scenario {
  std::string name = "custom";
  PipelineConfig config;
  SimStreamModel stream;
  std::vector<WorkerGroup> workers;
  /// Arrivals stop after this much simulated time; in-flight work drains.
  Millis horizon{200'000'000};
  /// Accuracy lost when a worker's locale does not exactly match the video's.
  double locale_mismatch_penalty = 0.0;

  void validate() const;
};

/// Presets: "desk", "survey", "youtube-scale". Throws InvalidConfig otherwise.
Scenario preset(std::string_view name);
std::vector<std::string> preset_names();

/// Scenario file: {"preset": base, "pipeline": {...}, "stream": {...},
/// "workers": [...], "horizon_s": N, "locale_mismatch_penalty": x}.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);

/// With probability yes_bias answer Yes; otherwise answer correctly with
/// probability true_accuracy - accuracy_penalty, else flip.
template <class Rng>
Opinion sample_vote(const SimWorkerModel& model, Truth truth, Rng& rng, double accuracy_penalty = 0.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < model.yes_bias) return Opinion::Yes;
  const double acc = std::clamp(model.true_accuracy - accuracy_penalty, 0.0, 1.0);
  const Opinion right = correct_opinion(truth);
  if (unit(rng) < acc) return right;
  return right == Opinion::Yes ? Opinion::No : Opinion::Yes;
}

template <class Rng>
Millis sample_latency(const SimWorkerModel& model, Rng& rng) {
  double seconds = std::exp(model.latency_mu);
  if (model.latency_sigma > 0.0) seconds = std::lognormal_distribution<double>(model.latency_mu, model.latency_sigma)(rng);
  return std::max(Millis{1}, seconds_to_millis(seconds));
}

struct SimResult {
  LogHeader header;
  std::vector<EventRecord> events;
  EngineState state;
  MetricsReport metrics;
  nlohmann::json summary;
  std::uint64_t videos_generated = 0;
  std::uint64_t votes_declined = 0;
  std::uint64_t votes_late = 0;
};

/// Deterministic for a given (scenario, seed). The seed overrides
/// scenario.config.seed and is recorded in the log header. `observer` is
/// installed on the engine before any record is written.
SimResult run_simulation(const Scenario& scenario, std::uint64_t seed, Engine::Observer observer = {});

nlohmann::json report_json(const SimResult& r);
void write_log(const LogHeader& header, std::span<const EventRecord> events, const std::filesystem::path& path);

}  // namespace crowdmod::sim
