// Worker selection for segment tasks.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <unordered_set>
#include <vector>

#include "crowdmod/model.hpp"

namespace crowdmod {

struct AssignmentPolicy {
  std::uint32_t quorum_m = 5;
  Millis cooldown{2'220'000};
  bool prefer_signed = true;
  double locale_weight = 1.0;
  std::uint32_t max_retries = 2;
  double gold_injection_rate = 0.1;

  /// Delay before a shortfall task re-enters the dispatch queue.
  Millis retry_delay() const { return cooldown / 4; }
  void validate() const;
};

using WorkerRef = std::reference_wrapper<const WorkerProfile>;

/// Workers idle for at least the cooldown (or never dispatched) and not
/// flagged as biased. Pool order is preserved.
std::vector<WorkerRef> eligible_workers(std::span<const WorkerProfile> pool, Timestamp now,
                                        const AssignmentPolicy& policy);

/// 1 on exact tag match, 0.5 when only the language subtag matches, else 0.
/// Tags are compared case-insensitively; '-' and '_' both separate subtags.
double locale_match(std::string_view worker_locale, std::string_view video_locale);

double candidate_score(const WorkerProfile& w, std::string_view video_locale, const AssignmentPolicy& policy);

/// Stable sort: signed first when prefer_signed, then by
/// accuracy + locale_weight * locale_match, descending.
std::vector<WorkerRef> rank_candidates(std::vector<WorkerRef> candidates, std::string_view video_locale,
                                       const AssignmentPolicy& policy);

struct AssignmentResult {
  std::vector<WorkerId> workers;
  /// quorum_m minus the number of workers picked, zero when fully staffed.
  std::uint32_t shortfall = 0;
};

/// Picks up to `quorum_m - already_assigned` top-ranked eligible workers that
/// are not yet on the task. Past the deadline only workers who voted count as
/// assigned. Workers serving other segments of the same video
/// stay eligible. Throws Terminal if the task is not open.
AssignmentResult assign_segment(const SegmentTask& task, std::span<const WorkerProfile> pool,
                                std::string_view video_locale, Timestamp now, const AssignmentPolicy& policy);

struct GoldItem {
  std::string id;
  Truth label = Truth::Safe;
  Millis duration{140'000};
  bool operator==(const GoldItem&) const = default;
};

struct Dispatch {
  SegmentId segment_id;
  WorkerId worker_id;
  /// Index into the gold bank for covert gold dispatches.
  std::optional<std::size_t> gold_item;
  bool operator==(const Dispatch&) const = default;
};

/// One Bernoulli(rate) draw; on success a uniform index into the gold bank.
/// Throws InvalidArgument if rate > 0 with an empty bank.
template <class Rng>
std::optional<std::size_t> draw_gold(std::size_t bank_size, double rate, Rng& rng) {
  if (rate <= 0.0) return std::nullopt;
  if (bank_size == 0) throw Error(ErrorCode::InvalidArgument, "gold injection enabled with an empty gold bank");
  if (!std::bernoulli_distribution(rate)(rng)) return std::nullopt;
  return std::uniform_int_distribution<std::size_t>(0, bank_size - 1)(rng);
}

/// Interleaves covert gold dispatches into a stream of real dispatches. Each
/// real dispatch is followed, with probability `rate`, by a gold dispatch to
/// the same worker.
template <class Rng>
std::vector<Dispatch> maybe_inject_gold(std::span<const Dispatch> stream, std::span<const GoldItem> bank,
                                        double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw Error(ErrorCode::InvalidArgument, "gold rate outside [0,1]");
  if (rate > 0.0 && bank.empty()) {
    throw Error(ErrorCode::InvalidArgument, "gold injection enabled with an empty gold bank");
  }
  std::vector<Dispatch> out;
  out.reserve(stream.size());
  for (const auto& d : stream) {
    out.push_back(d);
    if (auto idx = draw_gold(bank.size(), rate, rng)) {
      out.push_back({bank[*idx].id, d.worker_id, *idx});
    }
  }
  return out;
}

/// +1 credit when the vote agrees with a yes/no verdict; unchanged otherwise.
WorkerProfile award_credits(WorkerProfile worker, Verdict verdict, Opinion vote);

}  // namespace crowdmod
