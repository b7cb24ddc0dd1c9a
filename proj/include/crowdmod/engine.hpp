// The moderation pipeline: ingest -> segment -> assign -> collect -> judge -> decide.
//
// Every state change is an EventRecord. Live operations decide which events
// to emit; apply() is the only code that mutates state, so replaying a log
// rebuilds the state that wrote it.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "crowdmod/config.hpp"
#include "crowdmod/event_log.hpp"
#include "crowdmod/model.hpp"

namespace crowdmod {

/// mt19937_64 that counts raw draws so a replayed engine can resume the stream.
class CountingRng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit CountingRng(std::uint64_t seed = 0) : gen_(seed), seed_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() {
    ++pos_;
    return gen_();
  }
  std::uint64_t position() const { return pos_; }
  void seek(std::uint64_t pos) {
    gen_.seed(seed_);
    gen_.discard(pos);
    pos_ = pos;
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
  std::uint64_t pos_ = 0;
};

struct EngineState {
  std::map<VideoId, VideoCase> videos;
  std::map<SegmentId, SegmentTask> tasks;
  std::vector<WorkerProfile> workers;
  std::unordered_map<WorkerId, std::size_t> worker_index;
  /// Open assignments per worker that still await the worker's vote.
  std::map<WorkerId, std::vector<SegmentId>> inbox;
  std::set<std::pair<Timestamp, SegmentId>> timers;
  std::map<SegmentId, Timestamp> timer_of;
  std::uint64_t last_seq = 0;
  std::uint64_t votes_accepted = 0;
  std::uint64_t gold_issued = 0;
  std::uint64_t rng_pos = 0;
  Timestamp clock{};

  const WorkerProfile* find_worker(const WorkerId& id) const;
  bool operator==(const EngineState&) const = default;
};

enum class ActionKind { Dispatched, Finalized, VideoDecided };

struct Action {
  ActionKind kind;
  std::string subject;
  bool operator==(const Action&) const = default;
};

struct SegmentDetail {
  SegmentId segment_id;
  Interval interval;
  bool short_segment = false;
  Verdict verdict = Verdict::Open;
  std::optional<Verdict> provisional;
  std::size_t votes = 0;
  std::uint32_t quorum = 0;
};

struct Decision {
  VideoId video_id;
  VideoStatus status = VideoStatus::Pending;
  std::vector<SegmentDetail> segments;
};

struct VoteAck {
  std::string vote_id;
  std::optional<Verdict> provisional;
  Verdict segment_verdict = Verdict::Open;
};

struct TaskOffer {
  SegmentId segment_id;
  VideoId video_id;
  Interval interval;
  std::optional<Timestamp> deadline;
};

class Engine {
 public:
  using Observer = std::function<void(const EventRecord&, const EngineState&)>;

  /// Throws InvalidConfig on an invalid config. When `sink` is set the header
  /// and every record are written to it as they happen.
  explicit Engine(PipelineConfig config, EventLogWriter* sink = nullptr);
  /// Rebuilds state from a log; read-only with respect to the log. Throws
  /// Malformed when a record does not apply to the state built so far. New
  /// records go to `sink` (opened for append; no header is written).
  explicit Engine(const LogContents& log, EventLogWriter* sink = nullptr);

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const PipelineConfig& config() const { return config_; }
  LogHeader header() const;
  /// Called under the writer lock after each applied record.
  void set_observer(Observer observer);

  void register_worker(const WorkerId& id, IdentityClass identity, const std::string& locale, Timestamp now);
  /// Segments the video and dispatches every segment. `planted` carries
  /// simulator ground truth, one entry per segment, and is only recorded.
  Decision ingest_video(const VideoId& id, Millis duration, const std::string& locale, Timestamp now,
                        std::vector<Truth> planted = {});
  /// Safe under concurrent callers. Throws NotFound, Terminal, Unassigned or
  /// Duplicate without logging anything.
  VoteAck submit_vote(const SegmentId& segment, const WorkerId& worker, Opinion opinion, Timestamp now);
  /// Fires deadlines and retry rounds due at or before `now`. Throws
  /// ClockRegression if `now` is earlier than a previous tick.
  std::vector<Action> tick(Timestamp now);

  Decision query_decision(const VideoId& id) const;
  std::optional<TaskOffer> next_task(const WorkerId& worker) const;
  std::optional<Timestamp> next_eligible_at(const WorkerId& worker) const;
  std::optional<Timestamp> next_due() const;
  std::size_t segment_count(const VideoId& id) const;

  EngineState snapshot() const;
  std::vector<EventRecord> events() const;
  std::vector<EventRecord> events_since(std::uint64_t seq) const;
  std::uint64_t last_seq() const;

 private:
  void emit(Timestamp at, EventPayload payload);
  void apply(const EventRecord& e);
  void apply_finalized(const SegmentFinalized& p, Timestamp at);
  void reindex(const SegmentTask& task);
  std::unordered_map<WorkerId, double> voter_accuracies(const SegmentTask& task) const;

  void run_round(const SegmentId& id, Timestamp now, bool initial, std::vector<Action>& actions);
  void finalize(const SegmentId& id, Timestamp now, std::vector<Action>& actions);
  void maybe_finalize_video(const VideoId& id, Timestamp now, std::vector<Action>& actions);
  void process_due(const SegmentId& id, Timestamp now, std::vector<Action>& actions);
  std::vector<Action> advance(Timestamp now);
  Timestamp effective_now(Timestamp now) const;
  Decision decision_of(const VideoCase& video) const;

  PipelineConfig config_;
  EventLogWriter* sink_ = nullptr;
  Observer observer_;
  CountingRng rng_;
  EngineState state_;
  std::vector<EventRecord> log_;
  std::optional<Timestamp> last_tick_;
  mutable std::shared_mutex mu_;
};

}  // namespace crowdmod
