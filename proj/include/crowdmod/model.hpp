// Domain types for the crowd moderation engine.
//
// Everything here is a plain value type. Mutation happens only inside the
// pipeline engine, which applies EventRecords one at a time.

#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace crowdmod {

/// Tag clock for engine time. In simulation mode the epoch is the start of the
/// run; in service mode it is the Unix epoch.
struct EngineClock {
  using rep = std::int64_t;
  using period = std::milli;
  using duration = std::chrono::milliseconds;
  using time_point = std::chrono::time_point<EngineClock, duration>;
  static constexpr bool is_steady = false;
};

using Millis = std::chrono::milliseconds;
using Timestamp = EngineClock::time_point;

inline constexpr Timestamp at_ms(std::int64_t ms) { return Timestamp{Millis{ms}}; }
inline constexpr std::int64_t to_ms(Timestamp t) { return t.time_since_epoch().count(); }
Millis seconds_to_millis(double seconds);

using VideoId = std::string;
using SegmentId = std::string;
using WorkerId = std::string;

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  NotFound,
  Duplicate,
  Unassigned,
  Terminal,
  ClockRegression,
  SeqGap,
  Malformed,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Opinion { Yes, No };
enum class Verdict { Open, Yes, No, Unresolved };
enum class VideoStatus { Pending, InReview, Safe, Unsafe, Unresolved };
enum class IdentityClass { Signed, Unsigned };
enum class Truth { Safe, Unsafe };
enum class BiasFlag { None, YesBiased, NoBiased };
enum class FinalizeReason { Quorum, Deadline, RetriesExhausted };

inline bool is_terminal(Verdict v) { return v != Verdict::Open; }
inline bool is_terminal(VideoStatus s) {
  return s == VideoStatus::Safe || s == VideoStatus::Unsafe || s == VideoStatus::Unresolved;
}
inline Verdict to_verdict(Opinion o) { return o == Opinion::Yes ? Verdict::Yes : Verdict::No; }
/// A safe item is one a correct worker accepts (Yes).
inline Opinion correct_opinion(Truth t) { return t == Truth::Safe ? Opinion::Yes : Opinion::No; }

/// Half-open interval [start, end) on a video timeline.
struct Interval {
  Millis start{0};
  Millis end{0};

  Millis length() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

struct Vote {
  std::string vote_id;
  SegmentId segment_id;
  WorkerId worker_id;
  Opinion opinion = Opinion::No;
  Timestamp submitted_at{};
  /// Frozen when the parent segment reaches a terminal verdict.
  std::optional<double> weight_at_finalization;

  bool operator==(const Vote&) const = default;
};

struct SegmentTask {
  SegmentId segment_id;
  VideoId video_id;
  std::size_t index = 0;
  Interval interval;
  bool short_segment = false;
  std::uint32_t quorum_target = 1;
  std::vector<WorkerId> assigned_workers;
  std::vector<Vote> votes;
  Verdict verdict = Verdict::Open;
  std::optional<Verdict> provisional;
  std::optional<Timestamp> deadline;
  std::optional<Timestamp> next_dispatch_at;
  std::uint32_t retries_left = 0;
  std::uint32_t rounds = 0;
  bool shortfall = false;
  bool is_gold = false;
  std::optional<Truth> gold_label;
  std::optional<SegmentId> paired_with;
  std::optional<Timestamp> finalized_at;

  bool has_vote_from(const WorkerId& worker) const;
  bool is_assigned(const WorkerId& worker) const;
  bool operator==(const SegmentTask&) const = default;
};

/// Bounded FIFO of agree/disagree outcomes.
class AgreementWindow {
 public:
  explicit AgreementWindow(std::size_t capacity = 50);

  void push(bool agreed);
  std::size_t size() const { return outcomes_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t agreements() const { return agreements_; }
  bool empty() const { return outcomes_.empty(); }
  /// agreements / size, or the 0.5 prior when empty.
  double accuracy() const;
  const std::deque<bool>& outcomes() const { return outcomes_; }

  bool operator==(const AgreementWindow&) const = default;

 private:
  std::size_t capacity_;
  std::size_t agreements_ = 0;
  std::deque<bool> outcomes_;
};

inline constexpr double kPriorAccuracy = 0.5;

struct GoldStats {
  std::uint32_t safe_seen = 0;
  std::uint32_t safe_yes = 0;
  std::uint32_t unsafe_seen = 0;
  std::uint32_t unsafe_yes = 0;

  std::uint32_t total() const { return safe_seen + unsafe_seen; }
  bool operator==(const GoldStats&) const = default;
};

struct WorkerProfile {
  WorkerId worker_id;
  IdentityClass identity_class = IdentityClass::Unsigned;
  std::string locale;
  std::uint64_t credits = 0;
  std::optional<Timestamp> last_task_at;
  AgreementWindow agreement_window;
  double accuracy = kPriorAccuracy;
  GoldStats gold_stats;
  BiasFlag bias_flag = BiasFlag::None;

  bool operator==(const WorkerProfile&) const = default;
};

struct VideoCase {
  VideoId video_id;
  Millis total_duration{0};
  std::string locale;
  std::vector<SegmentId> segments;
  VideoStatus status = VideoStatus::Pending;
  Timestamp created_at{};
  std::optional<Timestamp> finalized_at;
  /// Ground-truth annotations, present only for simulated videos.
  std::vector<Truth> planted;
  /// Gold tasks paired with this video's segments so far.
  std::uint32_t gold_tasks = 0;

  bool operator==(const VideoCase&) const = default;
};

// Event payloads, one per EventKind.

struct WorkerRegistered {
  WorkerId worker_id;
  IdentityClass identity_class = IdentityClass::Unsigned;
  std::string locale;
  bool operator==(const WorkerRegistered&) const = default;
};

struct VideoIngested {
  VideoId video_id;
  Millis duration{0};
  std::string locale;
  std::vector<Truth> planted;
  bool operator==(const VideoIngested&) const = default;
};

struct SegmentCreated {
  SegmentId segment_id;
  VideoId video_id;
  std::size_t index = 0;
  Interval interval;
  bool short_segment = false;
  std::uint32_t quorum = 1;
  std::uint32_t retries = 0;
  bool operator==(const SegmentCreated&) const = default;
};

/// One dispatch round for a segment: the newly assigned workers plus the
/// task's scheduling state after the round.
struct TaskDispatched {
  SegmentId segment_id;
  std::vector<WorkerId> workers;
  std::optional<Timestamp> deadline;
  std::optional<Timestamp> next_dispatch_at;
  std::uint32_t retries_left = 0;
  bool shortfall = false;
  std::uint64_t rng_pos = 0;
  bool operator==(const TaskDispatched&) const = default;
};

struct GoldInjected {
  SegmentId segment_id;
  std::string gold_item;
  Truth label = Truth::Safe;
  Millis duration{0};
  WorkerId worker_id;
  SegmentId paired_with;
  Timestamp deadline{};
  bool operator==(const GoldInjected&) const = default;
};

struct VoteReceived {
  std::string vote_id;
  SegmentId segment_id;
  WorkerId worker_id;
  Opinion opinion = Opinion::No;
  bool operator==(const VoteReceived&) const = default;
};

struct SegmentFinalized {
  SegmentId segment_id;
  Verdict verdict = Verdict::Unresolved;
  FinalizeReason reason = FinalizeReason::Quorum;
  /// Aligned with the task's vote order.
  std::vector<double> weights;
  bool operator==(const SegmentFinalized&) const = default;
};

struct VideoFinalized {
  VideoId video_id;
  VideoStatus status = VideoStatus::Unresolved;
  bool operator==(const VideoFinalized&) const = default;
};

enum class EventKind {
  VideoIngested,
  SegmentCreated,
  TaskDispatched,
  VoteReceived,
  SegmentFinalized,
  VideoFinalized,
  WorkerRegistered,
  GoldInjected,
};

using EventPayload = std::variant<VideoIngested, SegmentCreated, TaskDispatched, VoteReceived,
                                  SegmentFinalized, VideoFinalized, WorkerRegistered, GoldInjected>;

struct EventRecord {
  std::uint64_t seq = 0;
  Timestamp at{};
  EventPayload payload;

  EventKind kind() const { return static_cast<EventKind>(payload.index()); }
  bool operator==(const EventRecord&) const = default;
};

std::string_view to_string(Opinion v);
std::string_view to_string(Verdict v);
std::string_view to_string(VideoStatus v);
std::string_view to_string(IdentityClass v);
std::string_view to_string(Truth v);
std::string_view to_string(BiasFlag v);
std::string_view to_string(EventKind v);

Opinion parse_opinion(std::string_view s);
IdentityClass parse_identity_class(std::string_view s);

enum class PartitionIssue { Overlap, Gap, Undersized, ForeignSegment };

struct ValidationReport {
  struct Finding {
    PartitionIssue issue;
    std::string detail;
  };
  std::vector<Finding> findings;

  bool ok() const { return findings.empty(); }
  bool has(PartitionIssue issue) const;
};

/// Checks that the segments partition [0, total_duration) into disjoint
/// pieces of at least `tau` each. A single segment spanning a video shorter
/// than tau is accepted as a short segment.
ValidationReport validate_video_case(const VideoCase& video, const std::vector<SegmentTask>& segments,
                                     Millis tau);

}  // namespace crowdmod
