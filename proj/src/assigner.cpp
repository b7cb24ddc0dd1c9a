#include "crowdmod/assigner.hpp"

#include <algorithm>
#include <cctype>

namespace crowdmod {

void AssignmentPolicy::validate() const {
  if (quorum_m < 1) throw Error(ErrorCode::InvalidConfig, "assignment.quorum_m must be >= 1");
  if (cooldown < Millis{0}) throw Error(ErrorCode::InvalidConfig, "assignment.cooldown must be >= 0");
  if (!(locale_weight >= 0.0)) throw Error(ErrorCode::InvalidConfig, "assignment.locale_weight must be >= 0");
  if (!(gold_injection_rate >= 0.0 && gold_injection_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "assignment.gold_injection_rate must be in [0,1]");
  }
}

std::vector<WorkerRef> eligible_workers(std::span<const WorkerProfile> pool, Timestamp now,
                                        const AssignmentPolicy& policy) {
  std::vector<WorkerRef> out;
  for (const auto& w : pool) {
    if (w.bias_flag != BiasFlag::None) continue;
    if (w.last_task_at && now - *w.last_task_at < policy.cooldown) continue;
    out.emplace_back(w);
  }
  return out;
}

namespace {

std::string normalize_tag(std::string_view tag) {
  std::string out;
  out.reserve(tag.size());
  for (char c : tag) out.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

std::string_view language_of(std::string_view tag) { return tag.substr(0, tag.find('-')); }

}  // namespace

double locale_match(std::string_view worker_locale, std::string_view video_locale) {
  const std::string a = normalize_tag(worker_locale);
  const std::string b = normalize_tag(video_locale);
  if (a.empty() || b.empty()) return 0.0;
  if (a == b) return 1.0;
  if (language_of(a) == language_of(b)) return 0.5;
  return 0.0;
}

double candidate_score(const WorkerProfile& w, std::string_view video_locale, const AssignmentPolicy& policy) {
  return w.accuracy + policy.locale_weight * locale_match(w.locale, video_locale);
}

std::vector<WorkerRef> rank_candidates(std::vector<WorkerRef> candidates, std::string_view video_locale,
                                       const AssignmentPolicy& policy) {
  struct Keyed {
    int tier;
    double score;
    WorkerRef worker;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(candidates.size());
  for (const auto& c : candidates) {
    const WorkerProfile& w = c.get();
    const int tier = (policy.prefer_signed && w.identity_class == IdentityClass::Unsigned) ? 1 : 0;
    keyed.push_back({tier, candidate_score(w, video_locale, policy), c});
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.tier != b.tier) return a.tier < b.tier;
    return a.score > b.score;
  });
  std::vector<WorkerRef> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(k.worker);
  return out;
}

AssignmentResult assign_segment(const SegmentTask& task, std::span<const WorkerProfile> pool,
                                std::string_view video_locale, Timestamp now, const AssignmentPolicy& policy) {
  if (task.verdict != Verdict::Open) {
    throw Error(ErrorCode::Terminal, "segment " + task.segment_id + " is not open");
  }
  const auto target = static_cast<std::size_t>(task.quorum_target);
  // Once the deadline has passed, silent assignees no longer count toward the quorum.
  const bool expired = task.deadline && *task.deadline <= now;
  const std::size_t have = expired ? task.votes.size() : task.assigned_workers.size();
  const std::size_t wanted = target > have ? target - have : 0;

  auto candidates = eligible_workers(pool, now, policy);
  std::erase_if(candidates, [&](const WorkerRef& w) { return task.is_assigned(w.get().worker_id); });
  const auto ranked = rank_candidates(std::move(candidates), video_locale, policy);

  AssignmentResult result;
  const std::size_t take = std::min(wanted, ranked.size());
  result.workers.reserve(take);
  for (std::size_t i = 0; i < take; ++i) result.workers.push_back(ranked[i].get().worker_id);
  result.shortfall = static_cast<std::uint32_t>(target - std::min(target, have + take));
  return result;
}

WorkerProfile award_credits(WorkerProfile worker, Verdict verdict, Opinion vote) {
  if (verdict == Verdict::Yes || verdict == Verdict::No) {
    if (to_verdict(vote) == verdict) worker.credits += 1;
  }
  return worker;
}

}  // namespace crowdmod
