#include "crowdmod/model.hpp"

#include <algorithm>
#include <cmath>

namespace crowdmod {

Millis seconds_to_millis(double seconds) {
  if (!std::isfinite(seconds)) throw Error(ErrorCode::InvalidArgument, "non-finite duration");
  return Millis{std::llround(seconds * 1000.0)};
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::InvalidConfig: return "invalid_config";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Duplicate: return "duplicate";
    case ErrorCode::Unassigned: return "unassigned";
    case ErrorCode::Terminal: return "terminal";
    case ErrorCode::ClockRegression: return "clock_regression";
    case ErrorCode::SeqGap: return "seq_gap";
    case ErrorCode::Malformed: return "malformed";
  }
  return "unknown";
}

bool SegmentTask::has_vote_from(const WorkerId& worker) const {
  return std::any_of(votes.begin(), votes.end(), [&](const Vote& v) { return v.worker_id == worker; });
}

bool SegmentTask::is_assigned(const WorkerId& worker) const {
  return std::find(assigned_workers.begin(), assigned_workers.end(), worker) != assigned_workers.end();
}

AgreementWindow::AgreementWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::InvalidArgument, "agreement window capacity must be positive");
}

void AgreementWindow::push(bool agreed) {
  outcomes_.push_back(agreed);
  if (agreed) ++agreements_;
  while (outcomes_.size() > capacity_) {
    if (outcomes_.front()) --agreements_;
    outcomes_.pop_front();
  }
}

double AgreementWindow::accuracy() const {
  if (outcomes_.empty()) return kPriorAccuracy;
  return static_cast<double>(agreements_) / static_cast<double>(outcomes_.size());
}

std::string_view to_string(Opinion v) { return v == Opinion::Yes ? "yes" : "no"; }

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Open: return "open";
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::Unresolved: return "unresolved";
  }
  return "?";
}

std::string_view to_string(VideoStatus v) {
  switch (v) {
    case VideoStatus::Pending: return "pending";
    case VideoStatus::InReview: return "in-review";
    case VideoStatus::Safe: return "safe";
    case VideoStatus::Unsafe: return "unsafe";
    case VideoStatus::Unresolved: return "unresolved";
  }
  return "?";
}

std::string_view to_string(IdentityClass v) { return v == IdentityClass::Signed ? "signed" : "unsigned"; }
std::string_view to_string(Truth v) { return v == Truth::Safe ? "safe" : "unsafe"; }

std::string_view to_string(BiasFlag v) {
  switch (v) {
    case BiasFlag::None: return "none";
    case BiasFlag::YesBiased: return "yes-biased";
    case BiasFlag::NoBiased: return "no-biased";
  }
  return "?";
}

std::string_view to_string(EventKind v) {
  switch (v) {
    case EventKind::VideoIngested: return "video_ingested";
    case EventKind::SegmentCreated: return "segment_created";
    case EventKind::TaskDispatched: return "task_dispatched";
    case EventKind::VoteReceived: return "vote_received";
    case EventKind::SegmentFinalized: return "segment_finalized";
    case EventKind::VideoFinalized: return "video_finalized";
    case EventKind::WorkerRegistered: return "worker_registered";
    case EventKind::GoldInjected: return "gold_injected";
  }
  return "?";
}

Opinion parse_opinion(std::string_view s) {
  if (s == "yes" || s == "Y" || s == "y") return Opinion::Yes;
  if (s == "no" || s == "N" || s == "n") return Opinion::No;
  throw Error(ErrorCode::InvalidArgument, "opinion must be yes or no, got '" + std::string(s) + "'");
}

IdentityClass parse_identity_class(std::string_view s) {
  if (s == "signed") return IdentityClass::Signed;
  if (s == "unsigned") return IdentityClass::Unsigned;
  throw Error(ErrorCode::InvalidArgument, "identity_class must be signed or unsigned");
}

bool ValidationReport::has(PartitionIssue issue) const {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.issue == issue; });
}

ValidationReport validate_video_case(const VideoCase& video, const std::vector<SegmentTask>& segments,
                                     Millis tau) {
  ValidationReport report;
  auto add = [&](PartitionIssue issue, std::string detail) {
    report.findings.push_back({issue, std::move(detail)});
  };

  std::vector<Interval> spans;
  for (const auto& s : segments) {
    if (s.video_id != video.video_id) add(PartitionIssue::ForeignSegment, s.segment_id);
    spans.push_back(s.interval);
  }
  std::sort(spans.begin(), spans.end(),
            [](const Interval& a, const Interval& b) { return a.start < b.start; });

  Millis cursor{0};
  for (const auto& iv : spans) {
    if (iv.start < cursor) {
      add(PartitionIssue::Overlap, "interval starting at " + std::to_string(iv.start.count()) + " ms overlaps");
    } else if (iv.start > cursor) {
      add(PartitionIssue::Gap, "gap before " + std::to_string(iv.start.count()) + " ms");
    }
    cursor = std::max(cursor, iv.end);
  }
  if (cursor < video.total_duration) add(PartitionIssue::Gap, "timeline not covered to the end");
  if (cursor > video.total_duration) add(PartitionIssue::Overlap, "segment extends past the end");

  const bool single_short = spans.size() == 1 && video.total_duration < tau;
  if (!single_short) {
    for (const auto& iv : spans) {
      if (iv.length() < tau) {
        add(PartitionIssue::Undersized, "segment of " + std::to_string(iv.length().count()) + " ms");
      }
    }
  }
  return report;
}

}  // namespace crowdmod
