// Vote aggregation, worker accuracy tracking and gold-based bias estimation.

#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "crowdmod/model.hpp"

namespace crowdmod {

enum class Weighting { Uniform, LogOdds };

std::string_view to_string(Weighting w);
Weighting parse_weighting(std::string_view s);

struct JudgmentPolicy {
  std::size_t window_w = 50;
  Weighting weighting = Weighting::LogOdds;
  double accuracy_clamp_eps = 0.01;
  /// Threshold on the estimated P(yes|unsafe) or P(no|safe).
  double bias_threshold = 0.7;
  std::uint32_t min_gold_for_bias = 20;
  Millis quorum_timeout{120'000};

  void validate() const;
};

/// Strict head-count majority; a tie resolves to No. Throws on empty input.
Opinion majority_vote(std::span<const Opinion> opinions);
Opinion majority_vote(std::span<const Vote> votes);

/// ln(a / (1 - a)) after clamping a into [eps, 1 - eps]. Workers at or below
/// chance get weight 0 rather than a negative (vote-inverting) weight.
double log_odds_weight(double accuracy, double eps);

/// Yes iff the weighted Yes mass exceeds the weighted No mass. When the two
/// masses tie (up to rounding), falls back to head count, then to No.
/// Weights must be non-negative.
Opinion decide_weighted(std::span<const Opinion> opinions, std::span<const double> weights);

struct WeightedVerdict {
  Opinion verdict = Opinion::No;
  /// Aligned with the input votes.
  std::vector<double> weights;
};

/// Throws InvalidArgument on empty votes or a voter without an accuracy entry.
WeightedVerdict weighted_verdict(std::span<const Vote> votes,
                                 const std::unordered_map<WorkerId, double>& accuracies,
                                 const JudgmentPolicy& policy);

WorkerProfile update_accuracy(WorkerProfile worker, bool agreed, const JudgmentPolicy& policy);

/// Folds one gold response into the worker's counters and re-evaluates the
/// bias flag once enough gold has been seen. Flags can clear again.
WorkerProfile update_bias(WorkerProfile worker, const SegmentTask& gold_task, Opinion vote,
                          const JudgmentPolicy& policy);
BiasFlag evaluate_bias(const GoldStats& stats, const JudgmentPolicy& policy);

/// Verdict over whatever votes are present, for observability only.
Verdict provisional_verdict(const SegmentTask& task, const std::unordered_map<WorkerId, double>& accuracies,
                            const JudgmentPolicy& policy);

enum class FinalizeAction { Finalized, Retry };

struct FinalizeResult {
  SegmentTask task;
  FinalizeAction action = FinalizeAction::Finalized;
  FinalizeReason reason = FinalizeReason::Quorum;
};

/// Requires an open task that has reached quorum or whose deadline has
/// passed. With zero votes the task goes to the retry path while retries
/// remain and becomes unresolved afterwards. On finalization each vote's
/// weight is frozen.
FinalizeResult finalize_segment(SegmentTask task, Timestamp now,
                                const std::unordered_map<WorkerId, double>& accuracies,
                                const JudgmentPolicy& policy);

/// AND over segment verdicts. Any No makes the video unsafe even while other
/// segments are open; otherwise every segment must be terminal, and any
/// unresolved segment makes the video unresolved. Returns nullopt when no
/// decision is possible yet.
std::optional<VideoStatus> decide_video(std::span<const Verdict> verdicts);

/// Throws InvalidArgument when decide_video has no decision.
VideoCase finalize_video(VideoCase video, std::span<const Verdict> verdicts, Timestamp now);

}  // namespace crowdmod
