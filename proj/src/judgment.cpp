#include "crowdmod/judgment.hpp"

#include <algorithm>
#include <cmath>

namespace crowdmod {

std::string_view to_string(Weighting w) { return w == Weighting::Uniform ? "uniform" : "log_odds"; }

Weighting parse_weighting(std::string_view s) {
  if (s == "uniform") return Weighting::Uniform;
  if (s == "log_odds") return Weighting::LogOdds;
  throw Error(ErrorCode::InvalidConfig, "judgment.weighting must be uniform or log_odds");
}

void JudgmentPolicy::validate() const {
  if (window_w < 1) throw Error(ErrorCode::InvalidConfig, "judgment.window_w must be >= 1");
  if (!(accuracy_clamp_eps > 0.0 && accuracy_clamp_eps < 0.5)) {
    throw Error(ErrorCode::InvalidConfig, "judgment.accuracy_clamp_eps must be in (0, 0.5)");
  }
  if (!(bias_threshold > 0.5 && bias_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "judgment.bias_threshold must be in (0.5, 1]");
  }
  if (min_gold_for_bias < 1) throw Error(ErrorCode::InvalidConfig, "judgment.min_gold_for_bias must be >= 1");
  if (quorum_timeout <= Millis{0}) throw Error(ErrorCode::InvalidConfig, "judgment.quorum_timeout must be > 0");
}

Opinion majority_vote(std::span<const Opinion> opinions) {
  if (opinions.empty()) throw Error(ErrorCode::InvalidArgument, "majority_vote on an empty vote list");
  const auto yes = std::count(opinions.begin(), opinions.end(), Opinion::Yes);
  const auto no = static_cast<std::ptrdiff_t>(opinions.size()) - yes;
  return yes > no ? Opinion::Yes : Opinion::No;
}

Opinion majority_vote(std::span<const Vote> votes) {
  std::vector<Opinion> ops;
  ops.reserve(votes.size());
  for (const auto& v : votes) ops.push_back(v.opinion);
  return majority_vote(ops);
}

double log_odds_weight(double accuracy, double eps) {
  const double a = std::clamp(accuracy, eps, 1.0 - eps);
  return std::max(0.0, std::log(a / (1.0 - a)));
}

Opinion decide_weighted(std::span<const Opinion> opinions, std::span<const double> weights) {
  if (opinions.empty()) throw Error(ErrorCode::InvalidArgument, "weighted vote on an empty vote list");
  if (opinions.size() != weights.size()) throw Error(ErrorCode::InvalidArgument, "weights/opinions size mismatch");

  double margin = 0.0;
  double mass = 0.0;
  std::ptrdiff_t heads = 0;
  for (std::size_t i = 0; i < opinions.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "vote weights must be non-negative");
    const bool yes = opinions[i] == Opinion::Yes;
    margin += yes ? weights[i] : -weights[i];
    mass += weights[i];
    heads += yes ? 1 : -1;
  }
  const double tie_band = 1e-12 * mass;
  if (margin > tie_band) return Opinion::Yes;
  if (margin < -tie_band) return Opinion::No;
  return heads > 0 ? Opinion::Yes : Opinion::No;
}

WeightedVerdict weighted_verdict(std::span<const Vote> votes,
                                 const std::unordered_map<WorkerId, double>& accuracies,
                                 const JudgmentPolicy& policy) {
  if (votes.empty()) throw Error(ErrorCode::InvalidArgument, "weighted_verdict on an empty vote list");
  WeightedVerdict out;
  std::vector<Opinion> ops;
  ops.reserve(votes.size());
  out.weights.reserve(votes.size());
  for (const auto& v : votes) {
    auto it = accuracies.find(v.worker_id);
    if (it == accuracies.end()) {
      throw Error(ErrorCode::InvalidArgument, "no accuracy entry for worker " + v.worker_id);
    }
    ops.push_back(v.opinion);
    out.weights.push_back(policy.weighting == Weighting::Uniform
                              ? 1.0
                              : log_odds_weight(it->second, policy.accuracy_clamp_eps));
  }
  out.verdict = policy.weighting == Weighting::Uniform ? majority_vote(ops) : decide_weighted(ops, out.weights);
  return out;
}

WorkerProfile update_accuracy(WorkerProfile worker, bool agreed, const JudgmentPolicy& policy) {
  if (worker.agreement_window.capacity() != policy.window_w) {
    AgreementWindow resized(policy.window_w);
    for (bool o : worker.agreement_window.outcomes()) resized.push(o);
    worker.agreement_window = std::move(resized);
  }
  worker.agreement_window.push(agreed);
  worker.accuracy = worker.agreement_window.accuracy();
  return worker;
}

BiasFlag evaluate_bias(const GoldStats& s, const JudgmentPolicy& policy) {
  if (s.total() < policy.min_gold_for_bias) return BiasFlag::None;
  if (s.unsafe_seen > 0) {
    const double yes_given_unsafe = static_cast<double>(s.unsafe_yes) / s.unsafe_seen;
    if (yes_given_unsafe > policy.bias_threshold) return BiasFlag::YesBiased;
  }
  if (s.safe_seen > 0) {
    const double no_given_safe = static_cast<double>(s.safe_seen - s.safe_yes) / s.safe_seen;
    if (no_given_safe > policy.bias_threshold) return BiasFlag::NoBiased;
  }
  return BiasFlag::None;
}

WorkerProfile update_bias(WorkerProfile worker, const SegmentTask& gold_task, Opinion vote,
                          const JudgmentPolicy& policy) {
  if (!gold_task.is_gold || !gold_task.gold_label) {
    throw Error(ErrorCode::InvalidArgument, "bias update requires a gold task with a label");
  }
  auto& s = worker.gold_stats;
  const bool yes = vote == Opinion::Yes;
  if (*gold_task.gold_label == Truth::Safe) {
    ++s.safe_seen;
    if (yes) ++s.safe_yes;
  } else {
    ++s.unsafe_seen;
    if (yes) ++s.unsafe_yes;
  }
  worker.bias_flag = evaluate_bias(s, policy);
  return worker;
}

namespace {

WeightedVerdict aggregate(const SegmentTask& task, const std::unordered_map<WorkerId, double>& accuracies,
                          const JudgmentPolicy& policy) {
  if (task.is_gold) {
    // A gold task carries its own answer; the single vote is scored against it.
    WeightedVerdict out;
    out.verdict = correct_opinion(*task.gold_label);
    out.weights.assign(task.votes.size(), 1.0);
    return out;
  }
  return weighted_verdict(task.votes, accuracies, policy);
}

}  // namespace

Verdict provisional_verdict(const SegmentTask& task, const std::unordered_map<WorkerId, double>& accuracies,
                            const JudgmentPolicy& policy) {
  if (task.votes.empty()) return Verdict::Open;
  return to_verdict(aggregate(task, accuracies, policy).verdict);
}

FinalizeResult finalize_segment(SegmentTask task, Timestamp now,
                                const std::unordered_map<WorkerId, double>& accuracies,
                                const JudgmentPolicy& policy) {
  if (is_terminal(task.verdict)) {
    throw Error(ErrorCode::Terminal, "segment " + task.segment_id + " already finalized");
  }
  const bool quorum = task.votes.size() >= task.quorum_target;
  const bool expired = task.deadline ? now >= *task.deadline : task.assigned_workers.empty();
  if (!quorum && !expired) {
    throw Error(ErrorCode::InvalidArgument, "segment " + task.segment_id + " has neither quorum nor an expired deadline");
  }

  FinalizeResult result;
  if (task.votes.empty()) {
    if (task.retries_left > 0 && !task.is_gold) {
      result.action = FinalizeAction::Retry;
      result.task = std::move(task);
      return result;
    }
    task.verdict = Verdict::Unresolved;
    task.finalized_at = now;
    result.reason = FinalizeReason::RetriesExhausted;
    result.task = std::move(task);
    return result;
  }

  const auto agg = aggregate(task, accuracies, policy);
  for (std::size_t i = 0; i < task.votes.size(); ++i) task.votes[i].weight_at_finalization = agg.weights[i];
  task.verdict = to_verdict(agg.verdict);
  task.provisional = task.verdict;
  task.finalized_at = now;
  result.reason = quorum ? FinalizeReason::Quorum : FinalizeReason::Deadline;
  result.task = std::move(task);
  return result;
}

std::optional<VideoStatus> decide_video(std::span<const Verdict> verdicts) {
  bool all_terminal = true;
  bool any_unresolved = false;
  for (Verdict v : verdicts) {
    if (v == Verdict::No) return VideoStatus::Unsafe;
    if (v == Verdict::Open) all_terminal = false;
    if (v == Verdict::Unresolved) any_unresolved = true;
  }
  if (!all_terminal || verdicts.empty()) return std::nullopt;
  return any_unresolved ? VideoStatus::Unresolved : VideoStatus::Safe;
}

VideoCase finalize_video(VideoCase video, std::span<const Verdict> verdicts, Timestamp now) {
  auto status = decide_video(verdicts);
  if (!status) {
    throw Error(ErrorCode::InvalidArgument, "video " + video.video_id + " has open segments and no rejection");
  }
  video.status = *status;
  video.finalized_at = now;
  return video;
}

}  // namespace crowdmod
