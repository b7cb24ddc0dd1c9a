// Summaries and decision-quality metrics, computed from engine state and the
// event log alone.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdmod/engine.hpp"
#include "json.hpp"

namespace crowdmod {

/// Verdict and status counts. Two engines in the same state produce the
/// same summary.
nlohmann::json summarize(const EngineState& state);

/// Segment-level confusion, with "positive" meaning unsafe.
struct Confusion {
  std::uint64_t true_unsafe_judged_no = 0;
  std::uint64_t true_unsafe_judged_yes = 0;
  std::uint64_t true_safe_judged_no = 0;
  std::uint64_t true_safe_judged_yes = 0;
  std::uint64_t unresolved = 0;
  std::uint64_t open = 0;

  std::uint64_t decided() const {
    return true_unsafe_judged_no + true_unsafe_judged_yes + true_safe_judged_no + true_safe_judged_yes;
  }
  /// Fraction of decided segments whose verdict matches the planted truth.
  std::optional<double> accuracy() const;
};

struct WorkerRow {
  WorkerId worker_id;
  IdentityClass identity_class = IdentityClass::Unsigned;
  std::uint64_t credits = 0;
  double accuracy = 0.0;
  BiasFlag bias_flag = BiasFlag::None;
  std::uint64_t assignments = 0;
  std::uint64_t gold_assignments = 0;
  std::uint64_t votes = 0;
  /// Votes the worker had cast when its bias flag first became non-none.
  std::optional<std::uint64_t> flagged_after_votes;
};

struct VideoRow {
  VideoId video_id;
  VideoStatus status = VideoStatus::Pending;
  std::optional<bool> planted_unsafe;
  std::optional<double> latency_s;
};

struct MetricsReport {
  Confusion segments;
  /// Unsafe and unresolved videos both count as a predicted-unsafe outcome.
  std::uint64_t videos_tp = 0, videos_fp = 0, videos_fn = 0, videos_tn = 0;
  std::optional<double> video_precision;
  std::optional<double> video_recall;
  std::optional<double> latency_mean_s;
  std::optional<double> latency_p95_s;
  std::vector<WorkerRow> workers;
  std::vector<VideoRow> videos;
  /// Votes cast over assignments received, pooled over all workers.
  std::optional<double> utilization;
};

MetricsReport compute_metrics(const EngineState& state, std::span<const EventRecord> events,
                              const JudgmentPolicy& policy);
nlohmann::json to_json(const MetricsReport& m);

/// Writes segments.csv, videos.csv and workers.csv into `dir`.
void write_csv(const MetricsReport& m, const std::filesystem::path& dir);

/// Nearest-rank percentile of an unsorted sample; nullopt when empty.
std::optional<double> percentile(std::vector<double> values, double p);

}  // namespace crowdmod
