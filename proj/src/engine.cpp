#include "crowdmod/engine.hpp"

#include <algorithm>
#include <mutex>
#include <tuple>

#include "crowdmod/assigner.hpp"
#include "crowdmod/judgment.hpp"
#include "crowdmod/segmenter.hpp"

namespace crowdmod {

const WorkerProfile* EngineState::find_worker(const WorkerId& id) const {
  auto it = worker_index.find(id);
  return it == worker_index.end() ? nullptr : &workers[it->second];
}

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::Malformed, what); }

std::optional<Timestamp> due_time(const SegmentTask& t) {
  if (is_terminal(t.verdict)) return std::nullopt;
  if (t.votes.empty()) {
    // With nothing to count, an expired deadline only matters when no retry round is pending.
    if (t.next_dispatch_at) return t.next_dispatch_at;
    return t.deadline;
  }
  if (t.deadline && t.next_dispatch_at) return std::min(*t.deadline, *t.next_dispatch_at);
  return t.deadline ? t.deadline : t.next_dispatch_at;
}

void erase_from_inbox(std::map<WorkerId, std::vector<SegmentId>>& inbox, const WorkerId& w, const SegmentId& s) {
  auto it = inbox.find(w);
  if (it == inbox.end()) return;
  std::erase(it->second, s);
}

}  // namespace

Engine::Engine(PipelineConfig config, EventLogWriter* sink)
    : config_(std::move(config)), sink_(sink), rng_(config_.seed) {
  config_.validate();
  if (sink_) sink_->write_header(header());
}

Engine::Engine(const LogContents& log, EventLogWriter* sink)
    : config_(log.header ? log.header->config : PipelineConfig{}),
      sink_(sink),
      rng_(log.header ? log.header->seed : config_.seed) {
  if (log.header) config_.seed = log.header->seed;
  for (const auto& e : log.events) {
    if (e.seq != state_.last_seq + 1) {
      throw Error(ErrorCode::SeqGap, "expected seq " + std::to_string(state_.last_seq + 1) + ", got " +
                                         std::to_string(e.seq));
    }
    apply(e);
    log_.push_back(e);
  }
  rng_.seek(state_.rng_pos);
  if (!log.events.empty()) last_tick_ = state_.clock;
}

LogHeader Engine::header() const {
  return LogHeader{kLogSchemaVersion, config_hash(config_), config_.seed, config_};
}

void Engine::set_observer(Observer observer) {
  std::unique_lock lock(mu_);
  observer_ = std::move(observer);
}

void Engine::emit(Timestamp at, EventPayload payload) {
  EventRecord e{state_.last_seq + 1, at, std::move(payload)};
  apply(e);
  if (sink_) sink_->append(e);
  log_.push_back(std::move(e));
}

std::unordered_map<WorkerId, double> Engine::voter_accuracies(const SegmentTask& task) const {
  std::unordered_map<WorkerId, double> acc;
  for (const auto& v : task.votes) {
    const auto* w = state_.find_worker(v.worker_id);
    acc[v.worker_id] = w ? w->accuracy : kPriorAccuracy;
  }
  return acc;
}

void Engine::reindex(const SegmentTask& task) {
  if (auto it = state_.timer_of.find(task.segment_id); it != state_.timer_of.end()) {
    state_.timers.erase({it->second, task.segment_id});
    state_.timer_of.erase(it);
  }
  if (auto due = due_time(task)) {
    state_.timers.insert({*due, task.segment_id});
    state_.timer_of[task.segment_id] = *due;
  }
}

void Engine::apply(const EventRecord& e) {
  state_.last_seq = e.seq;
  state_.clock = std::max(state_.clock, e.at);
  const Timestamp at = e.at;

  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, WorkerRegistered>) {
          if (state_.worker_index.count(p.worker_id)) malformed("worker registered twice: " + p.worker_id);
          WorkerProfile w;
          w.worker_id = p.worker_id;
          w.identity_class = p.identity_class;
          w.locale = p.locale;
          w.agreement_window = AgreementWindow(config_.judgment.window_w);
          state_.worker_index[p.worker_id] = state_.workers.size();
          state_.workers.push_back(std::move(w));
        } else if constexpr (std::is_same_v<P, VideoIngested>) {
          if (state_.videos.count(p.video_id)) malformed("video ingested twice: " + p.video_id);
          VideoCase v;
          v.video_id = p.video_id;
          v.total_duration = p.duration;
          v.locale = p.locale;
          v.status = VideoStatus::InReview;
          v.created_at = at;
          v.planted = p.planted;
          state_.videos.emplace(p.video_id, std::move(v));
        } else if constexpr (std::is_same_v<P, SegmentCreated>) {
          auto vit = state_.videos.find(p.video_id);
          if (vit == state_.videos.end()) malformed("segment for unknown video " + p.video_id);
          if (state_.tasks.count(p.segment_id)) malformed("segment created twice: " + p.segment_id);
          SegmentTask t;
          t.segment_id = p.segment_id;
          t.video_id = p.video_id;
          t.index = p.index;
          t.interval = p.interval;
          t.short_segment = p.short_segment;
          t.quorum_target = p.quorum;
          t.retries_left = p.retries;
          state_.tasks.emplace(p.segment_id, std::move(t));
          vit->second.segments.push_back(p.segment_id);
        } else if constexpr (std::is_same_v<P, TaskDispatched>) {
          auto it = state_.tasks.find(p.segment_id);
          if (it == state_.tasks.end()) malformed("dispatch for unknown segment " + p.segment_id);
          auto& t = it->second;
          for (const auto& wid : p.workers) {
            auto wit = state_.worker_index.find(wid);
            if (wit == state_.worker_index.end()) malformed("dispatch to unknown worker " + wid);
            state_.workers[wit->second].last_task_at = at;
            t.assigned_workers.push_back(wid);
            state_.inbox[wid].push_back(t.segment_id);
          }
          t.rounds += 1;
          t.deadline = p.deadline;
          t.next_dispatch_at = p.next_dispatch_at;
          t.retries_left = p.retries_left;
          t.shortfall = p.shortfall;
          state_.rng_pos = p.rng_pos;
          reindex(t);
        } else if constexpr (std::is_same_v<P, GoldInjected>) {
          if (state_.tasks.count(p.segment_id)) malformed("gold task created twice: " + p.segment_id);
          if (!state_.worker_index.count(p.worker_id)) malformed("gold task for unknown worker " + p.worker_id);
          SegmentTask t;
          t.segment_id = p.segment_id;
          t.video_id = p.gold_item;
          t.interval = {Millis{0}, p.duration};
          t.quorum_target = 1;
          t.assigned_workers = {p.worker_id};
          t.deadline = p.deadline;
          t.rounds = 1;
          t.is_gold = true;
          t.gold_label = p.label;
          t.paired_with = p.paired_with;
          state_.inbox[p.worker_id].push_back(t.segment_id);
          state_.gold_issued += 1;
          if (auto pit = state_.tasks.find(p.paired_with); pit != state_.tasks.end()) {
            state_.videos.at(pit->second.video_id).gold_tasks += 1;
          }
          reindex(t);
          state_.tasks.emplace(p.segment_id, std::move(t));
        } else if constexpr (std::is_same_v<P, VoteReceived>) {
          auto it = state_.tasks.find(p.segment_id);
          if (it == state_.tasks.end()) malformed("vote for unknown segment " + p.segment_id);
          auto& t = it->second;
          if (is_terminal(t.verdict)) malformed("vote on terminal segment " + p.segment_id);
          if (!t.is_assigned(p.worker_id) || t.has_vote_from(p.worker_id)) {
            malformed("vote not acceptable on " + p.segment_id + " by " + p.worker_id);
          }
          t.votes.push_back(Vote{p.vote_id, p.segment_id, p.worker_id, p.opinion, at, std::nullopt});
          t.provisional = provisional_verdict(t, voter_accuracies(t), config_.judgment);
          state_.votes_accepted += 1;
          erase_from_inbox(state_.inbox, p.worker_id, p.segment_id);
          reindex(t);
        } else if constexpr (std::is_same_v<P, SegmentFinalized>) {
          apply_finalized(p, at);
        } else if constexpr (std::is_same_v<P, VideoFinalized>) {
          auto it = state_.videos.find(p.video_id);
          if (it == state_.videos.end()) malformed("finalize for unknown video " + p.video_id);
          if (is_terminal(it->second.status)) malformed("video finalized twice: " + p.video_id);
          it->second.status = p.status;
          it->second.finalized_at = at;
        }
      },
      e.payload);

  if (observer_) observer_(e, state_);
}

void Engine::apply_finalized(const SegmentFinalized& p, Timestamp at) {
  auto it = state_.tasks.find(p.segment_id);
  if (it == state_.tasks.end()) malformed("finalize for unknown segment " + p.segment_id);
  auto& t = it->second;
  if (is_terminal(t.verdict)) malformed("segment finalized twice: " + p.segment_id);
  if (!is_terminal(p.verdict)) malformed("non-terminal verdict for " + p.segment_id);
  const bool decided = p.verdict == Verdict::Yes || p.verdict == Verdict::No;
  if (decided && p.weights.size() != t.votes.size()) malformed("weight count mismatch for " + p.segment_id);

  t.verdict = p.verdict;
  t.finalized_at = at;
  if (decided) {
    t.provisional = p.verdict;
    for (std::size_t i = 0; i < t.votes.size(); ++i) t.votes[i].weight_at_finalization = p.weights[i];
  }
  for (const auto& wid : t.assigned_workers) erase_from_inbox(state_.inbox, wid, t.segment_id);
  reindex(t);

  for (const auto& v : t.votes) {
    auto wit = state_.worker_index.find(v.worker_id);
    if (wit == state_.worker_index.end()) continue;
    WorkerProfile& w = state_.workers[wit->second];
    if (t.is_gold) {
      w = update_bias(std::move(w), t, v.opinion, config_.judgment);
      w = award_credits(std::move(w), to_verdict(correct_opinion(*t.gold_label)), v.opinion);
    } else if (decided) {
      w = update_accuracy(std::move(w), to_verdict(v.opinion) == p.verdict, config_.judgment);
      w = award_credits(std::move(w), p.verdict, v.opinion);
    }
  }
}

Timestamp Engine::effective_now(Timestamp now) const { return std::max(now, state_.clock); }

void Engine::register_worker(const WorkerId& id, IdentityClass identity, const std::string& locale, Timestamp now) {
  std::unique_lock lock(mu_);
  if (id.empty()) throw Error(ErrorCode::InvalidArgument, "worker id must be non-empty");
  if (state_.worker_index.count(id)) throw Error(ErrorCode::Duplicate, "worker " + id + " already registered");
  emit(effective_now(now), WorkerRegistered{id, identity, locale});
}

Decision Engine::ingest_video(const VideoId& id, Millis duration, const std::string& locale, Timestamp now,
                              std::vector<Truth> planted) {
  std::unique_lock lock(mu_);
  if (id.empty()) throw Error(ErrorCode::InvalidArgument, "video id must be non-empty");
  if (state_.videos.count(id)) throw Error(ErrorCode::Duplicate, "video " + id + " already ingested");
  const auto slices = segment_timeline(duration, config_.segmentation);
  if (!planted.empty() && planted.size() != slices.size()) {
    throw Error(ErrorCode::InvalidArgument, "planted truth must have one entry per segment");
  }
  now = effective_now(now);
  std::vector<Action> actions = advance(now);

  emit(now, VideoIngested{id, duration, locale, std::move(planted)});
  std::vector<SegmentId> ids;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    ids.push_back(id + ":" + std::to_string(i));
    emit(now, SegmentCreated{ids.back(), id, i, slices[i].interval, slices[i].short_segment,
                             config_.assignment.quorum_m, config_.assignment.max_retries});
  }
  for (const auto& sid : ids) {
    run_round(sid, now, /*initial=*/true, actions);
  }
  return decision_of(state_.videos.at(id));
}

void Engine::run_round(const SegmentId& id, Timestamp now, bool initial, std::vector<Action>& actions) {
  const SegmentTask& task = state_.tasks.at(id);
  const VideoCase& video = state_.videos.at(task.video_id);
  const auto& policy = config_.assignment;

  std::uint32_t retries_left = task.retries_left;
  if (!initial) {
    if (retries_left == 0) throw std::logic_error("retry round without retries");
    --retries_left;
  }
  const AssignmentResult picked = assign_segment(task, state_.workers, video.locale, now, policy);

  std::vector<std::pair<WorkerId, std::size_t>> gold;
  for (const auto& wid : picked.workers) {
    if (auto idx = draw_gold(config_.gold_bank.size(), policy.gold_injection_rate, rng_)) {
      gold.emplace_back(wid, *idx);
    }
  }

  const std::size_t total = task.assigned_workers.size() + picked.workers.size();
  TaskDispatched d;
  d.segment_id = id;
  d.workers = picked.workers;
  d.deadline = picked.workers.empty() ? task.deadline : std::optional(now + config_.judgment.quorum_timeout);
  d.shortfall = picked.shortfall > 0;
  d.retries_left = retries_left;
  if (d.shortfall && retries_left > 0) d.next_dispatch_at = now + policy.retry_delay();
  d.rng_pos = rng_.position();
  const bool stranded = total == 0 && !d.next_dispatch_at;
  emit(now, std::move(d));
  actions.push_back({ActionKind::Dispatched, id});

  for (const auto& [wid, idx] : gold) {
    const GoldItem& item = config_.gold_bank[idx];
    // Shaped like a further segment of the same video so workers cannot tell gold apart.
    const VideoCase& v = state_.videos.at(task.video_id);
    const std::string gid = v.video_id + ":" + std::to_string(v.segments.size() + v.gold_tasks);
    emit(now, GoldInjected{gid, item.id, item.label, item.duration, wid, id, now + config_.judgment.quorum_timeout});
  }

  if (stranded) finalize(id, now, actions);
}

void Engine::finalize(const SegmentId& id, Timestamp now, std::vector<Action>& actions) {
  const SegmentTask& task = state_.tasks.at(id);
  FinalizeResult r = finalize_segment(task, now, voter_accuracies(task), config_.judgment);
  if (r.action == FinalizeAction::Retry) throw std::logic_error("finalize called on a task that should retry");

  SegmentFinalized p{id, r.task.verdict, r.reason, {}};
  for (const auto& v : r.task.votes) p.weights.push_back(v.weight_at_finalization.value_or(0.0));
  const bool gold = task.is_gold;
  const VideoId video = task.video_id;
  emit(now, std::move(p));
  actions.push_back({ActionKind::Finalized, id});
  if (!gold) maybe_finalize_video(video, now, actions);
}

void Engine::maybe_finalize_video(const VideoId& id, Timestamp now, std::vector<Action>& actions) {
  const VideoCase& video = state_.videos.at(id);
  if (is_terminal(video.status)) return;
  std::vector<Verdict> verdicts;
  verdicts.reserve(video.segments.size());
  for (const auto& sid : video.segments) verdicts.push_back(state_.tasks.at(sid).verdict);
  if (auto status = decide_video(verdicts)) {
    emit(now, VideoFinalized{id, *status});
    actions.push_back({ActionKind::VideoDecided, id});
  }
}

void Engine::process_due(const SegmentId& id, Timestamp now, std::vector<Action>& actions) {
  const SegmentTask& t = state_.tasks.at(id);
  const bool expired = t.deadline && *t.deadline <= now;
  if (expired && !t.votes.empty()) {
    finalize(id, now, actions);
  } else if (t.next_dispatch_at && *t.next_dispatch_at <= now) {
    run_round(id, now, /*initial=*/false, actions);
  } else if (expired) {
    if (t.retries_left > 0 && !t.is_gold) {
      run_round(id, now, /*initial=*/false, actions);
    } else {
      finalize(id, now, actions);
    }
  }
}

std::vector<Action> Engine::advance(Timestamp now) {
  std::vector<Action> actions;
  while (!state_.timers.empty() && state_.timers.begin()->first <= now) {
    const SegmentId id = state_.timers.begin()->second;
    const SegmentTask& t = state_.tasks.at(id);
    const auto before = std::tuple(t.rounds, t.verdict, t.votes.size());
    process_due(id, now, actions);
    if (std::tuple(t.rounds, t.verdict, t.votes.size()) == before) {
      throw std::logic_error("timer for " + id + " made no progress");
    }
  }
  return actions;
}

VoteAck Engine::submit_vote(const SegmentId& segment, const WorkerId& worker, Opinion opinion, Timestamp now) {
  std::unique_lock lock(mu_);
  now = effective_now(now);
  advance(now);

  auto it = state_.tasks.find(segment);
  if (it == state_.tasks.end()) throw Error(ErrorCode::NotFound, "unknown segment " + segment);
  if (!state_.worker_index.count(worker)) throw Error(ErrorCode::NotFound, "unknown worker " + worker);
  const SegmentTask& t = it->second;
  if (is_terminal(t.verdict)) throw Error(ErrorCode::Terminal, "segment " + segment + " is " + std::string(to_string(t.verdict)));
  if (!t.is_assigned(worker)) throw Error(ErrorCode::Unassigned, "worker " + worker + " is not assigned to " + segment);
  if (t.has_vote_from(worker)) throw Error(ErrorCode::Duplicate, "worker " + worker + " already voted on " + segment);

  const std::string vote_id = "v" + std::to_string(state_.votes_accepted + 1);
  emit(now, VoteReceived{vote_id, segment, worker, opinion});
  std::vector<Action> actions;
  if (t.votes.size() >= t.quorum_target) finalize(segment, now, actions);
  advance(now);

  const SegmentTask& after = state_.tasks.at(segment);
  return VoteAck{vote_id, after.provisional, after.verdict};
}

std::vector<Action> Engine::tick(Timestamp now) {
  std::unique_lock lock(mu_);
  if (last_tick_ && now < *last_tick_) {
    throw Error(ErrorCode::ClockRegression, "tick at " + std::to_string(to_ms(now)) + " ms precedes previous tick at " +
                                                std::to_string(to_ms(*last_tick_)) + " ms");
  }
  last_tick_ = now;
  return advance(now);
}

Decision Engine::decision_of(const VideoCase& video) const {
  Decision d{video.video_id, video.status, {}};
  for (const auto& sid : video.segments) {
    const SegmentTask& t = state_.tasks.at(sid);
    d.segments.push_back({sid, t.interval, t.short_segment, t.verdict, t.provisional, t.votes.size(), t.quorum_target});
  }
  return d;
}

Decision Engine::query_decision(const VideoId& id) const {
  std::shared_lock lock(mu_);
  auto it = state_.videos.find(id);
  if (it == state_.videos.end()) throw Error(ErrorCode::NotFound, "unknown video " + id);
  return decision_of(it->second);
}

std::optional<TaskOffer> Engine::next_task(const WorkerId& worker) const {
  std::shared_lock lock(mu_);
  if (!state_.worker_index.count(worker)) throw Error(ErrorCode::NotFound, "unknown worker " + worker);
  auto it = state_.inbox.find(worker);
  if (it == state_.inbox.end()) return std::nullopt;
  for (const auto& sid : it->second) {
    const SegmentTask& t = state_.tasks.at(sid);
    if (is_terminal(t.verdict) || t.has_vote_from(worker)) continue;
    const VideoId& video = t.is_gold && t.paired_with ? state_.tasks.at(*t.paired_with).video_id : t.video_id;
    return TaskOffer{sid, video, t.interval, t.deadline};
  }
  return std::nullopt;
}

std::optional<Timestamp> Engine::next_eligible_at(const WorkerId& worker) const {
  std::shared_lock lock(mu_);
  const auto* w = state_.find_worker(worker);
  if (!w) throw Error(ErrorCode::NotFound, "unknown worker " + worker);
  if (!w->last_task_at) return std::nullopt;
  return *w->last_task_at + config_.assignment.cooldown;
}

std::optional<Timestamp> Engine::next_due() const {
  std::shared_lock lock(mu_);
  if (state_.timers.empty()) return std::nullopt;
  return state_.timers.begin()->first;
}

std::size_t Engine::segment_count(const VideoId& id) const {
  std::shared_lock lock(mu_);
  auto it = state_.videos.find(id);
  return it == state_.videos.end() ? 0 : it->second.segments.size();
}

EngineState Engine::snapshot() const {
  std::shared_lock lock(mu_);
  return state_;
}

std::vector<EventRecord> Engine::events() const {
  std::shared_lock lock(mu_);
  return log_;
}

std::vector<EventRecord> Engine::events_since(std::uint64_t seq) const {
  std::shared_lock lock(mu_);
  if (seq >= log_.size()) return {};
  return {log_.begin() + static_cast<std::ptrdiff_t>(seq), log_.end()};
}

std::uint64_t Engine::last_seq() const {
  std::shared_lock lock(mu_);
  return state_.last_seq;
}

}  // namespace crowdmod
