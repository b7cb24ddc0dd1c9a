#include "crowdmod/event_log.hpp"

#include <istream>

namespace crowdmod {

using nlohmann::json;

namespace {

template <class E>
E enum_from(std::string_view s, std::initializer_list<E> values) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::Malformed, "unknown enum value '" + std::string(s) + "'");
}

Truth truth_from(const json& j) { return enum_from(j.get<std::string>(), {Truth::Safe, Truth::Unsafe}); }

json opt_time(const std::optional<Timestamp>& t) { return t ? json(to_ms(*t)) : json(nullptr); }

std::optional<Timestamp> opt_time_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return at_ms(j.get<std::int64_t>());
}

json payload_json(const WorkerRegistered& p) {
  return {{"worker_id", p.worker_id}, {"identity_class", to_string(p.identity_class)}, {"locale", p.locale}};
}
json payload_json(const VideoIngested& p) {
  json planted = json::array();
  for (Truth t : p.planted) planted.push_back(to_string(t));
  json j = {{"video_id", p.video_id}, {"duration_ms", p.duration.count()}, {"locale", p.locale}};
  if (!p.planted.empty()) j["planted"] = planted;
  return j;
}
json payload_json(const SegmentCreated& p) {
  return {{"segment_id", p.segment_id},       {"video_id", p.video_id},
          {"index", p.index},                 {"start_ms", p.interval.start.count()},
          {"end_ms", p.interval.end.count()}, {"short", p.short_segment},
          {"quorum", p.quorum},               {"retries", p.retries}};
}
json payload_json(const TaskDispatched& p) {
  return {{"segment_id", p.segment_id},
          {"workers", p.workers},
          {"deadline", opt_time(p.deadline)},
          {"next_dispatch_at", opt_time(p.next_dispatch_at)},
          {"retries_left", p.retries_left},
          {"shortfall", p.shortfall},
          {"rng_pos", p.rng_pos}};
}
json payload_json(const GoldInjected& p) {
  return {{"segment_id", p.segment_id}, {"gold_item", p.gold_item},
          {"label", to_string(p.label)}, {"duration_ms", p.duration.count()},
          {"worker_id", p.worker_id},   {"paired_with", p.paired_with},
          {"deadline", to_ms(p.deadline)}};
}
json payload_json(const VoteReceived& p) {
  return {{"vote_id", p.vote_id}, {"segment_id", p.segment_id}, {"worker_id", p.worker_id},
          {"opinion", to_string(p.opinion)}};
}
json payload_json(const SegmentFinalized& p) {
  const char* reason = p.reason == FinalizeReason::Quorum     ? "quorum"
                       : p.reason == FinalizeReason::Deadline ? "deadline"
                                                              : "retries_exhausted";
  return {{"segment_id", p.segment_id}, {"verdict", to_string(p.verdict)}, {"reason", reason},
          {"weights", p.weights}};
}
json payload_json(const VideoFinalized& p) {
  return {{"video_id", p.video_id}, {"status", to_string(p.status)}};
}

EventPayload payload_from(EventKind kind, const json& j) {
  switch (kind) {
    case EventKind::WorkerRegistered:
      return WorkerRegistered{j.at("worker_id"), parse_identity_class(j.at("identity_class").get<std::string>()),
                              j.at("locale")};
    case EventKind::VideoIngested: {
      VideoIngested p{j.at("video_id"), Millis{j.at("duration_ms").get<std::int64_t>()}, j.at("locale"), {}};
      if (j.contains("planted")) {
        for (const auto& t : j.at("planted")) p.planted.push_back(truth_from(t));
      }
      return p;
    }
    case EventKind::SegmentCreated:
      return SegmentCreated{j.at("segment_id"),
                            j.at("video_id"),
                            j.at("index").get<std::size_t>(),
                            {Millis{j.at("start_ms").get<std::int64_t>()}, Millis{j.at("end_ms").get<std::int64_t>()}},
                            j.at("short").get<bool>(),
                            j.at("quorum").get<std::uint32_t>(),
                            j.at("retries").get<std::uint32_t>()};
    case EventKind::TaskDispatched:
      return TaskDispatched{j.at("segment_id"),
                            j.at("workers").get<std::vector<WorkerId>>(),
                            opt_time_from(j.at("deadline")),
                            opt_time_from(j.at("next_dispatch_at")),
                            j.at("retries_left").get<std::uint32_t>(),
                            j.at("shortfall").get<bool>(),
                            j.at("rng_pos").get<std::uint64_t>()};
    case EventKind::GoldInjected:
      return GoldInjected{j.at("segment_id"),
                          j.at("gold_item"),
                          truth_from(j.at("label")),
                          Millis{j.at("duration_ms").get<std::int64_t>()},
                          j.at("worker_id"),
                          j.at("paired_with"),
                          at_ms(j.at("deadline").get<std::int64_t>())};
    case EventKind::VoteReceived:
      return VoteReceived{j.at("vote_id"), j.at("segment_id"), j.at("worker_id"),
                          enum_from(j.at("opinion").get<std::string>(), {Opinion::Yes, Opinion::No})};
    case EventKind::SegmentFinalized: {
      const auto reason = j.at("reason").get<std::string>();
      FinalizeReason r;
      if (reason == "quorum") r = FinalizeReason::Quorum;
      else if (reason == "deadline") r = FinalizeReason::Deadline;
      else if (reason == "retries_exhausted") r = FinalizeReason::RetriesExhausted;
      else throw Error(ErrorCode::Malformed, "unknown finalize reason " + reason);
      return SegmentFinalized{
          j.at("segment_id"),
          enum_from(j.at("verdict").get<std::string>(), {Verdict::Open, Verdict::Yes, Verdict::No, Verdict::Unresolved}),
          r, j.at("weights").get<std::vector<double>>()};
    }
    case EventKind::VideoFinalized:
      return VideoFinalized{j.at("video_id"),
                            enum_from(j.at("status").get<std::string>(),
                                      {VideoStatus::Pending, VideoStatus::InReview, VideoStatus::Safe,
                                       VideoStatus::Unsafe, VideoStatus::Unresolved})};
  }
  throw Error(ErrorCode::Malformed, "unknown event kind");
}

EventKind kind_from(std::string_view s) {
  return enum_from(s, {EventKind::VideoIngested, EventKind::SegmentCreated, EventKind::TaskDispatched,
                       EventKind::VoteReceived, EventKind::SegmentFinalized, EventKind::VideoFinalized,
                       EventKind::WorkerRegistered, EventKind::GoldInjected});
}

}  // namespace

json event_to_json(const EventRecord& e) {
  json j;
  j["seq"] = e.seq;
  j["kind"] = to_string(e.kind());
  j["at"] = to_ms(e.at);
  j["payload"] = std::visit([](const auto& p) { return payload_json(p); }, e.payload);
  return j;
}

EventRecord event_from_json(const json& j) {
  try {
    EventRecord e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.at = at_ms(j.at("at").get<std::int64_t>());
    e.payload = payload_from(kind_from(j.at("kind").get<std::string>()), j.at("payload"));
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::Malformed, std::string("malformed event record: ") + ex.what());
  }
}

std::string format_event(const EventRecord& e) { return event_to_json(e).dump(); }

std::string format_header(const LogHeader& h) {
  json j;
  j["schema"] = h.schema;
  j["config_hash"] = h.config_hash;
  j["seed"] = h.seed;
  j["config"] = h.config;
  return j.dump();
}

namespace {

LogHeader header_from(const json& j) {
  LogHeader h;
  try {
    h.schema = j.at("schema").get<int>();
    h.config_hash = j.value("config_hash", "");
    h.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("config")) from_json(j.at("config"), h.config);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::Malformed, std::string("malformed log header: ") + ex.what());
  }
  if (h.schema != kLogSchemaVersion) {
    throw Error(ErrorCode::Malformed, "unsupported log schema version " + std::to_string(h.schema));
  }
  return h;
}

}  // namespace

LogContents read_log(std::istream& in) {
  LogContents out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const bool unterminated = in.eof();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      if (unterminated) {
        out.truncated = true;
        break;
      }
      throw Error(ErrorCode::Malformed, "unparsable log line " + std::to_string(lineno));
    }
    if (j.contains("schema") && !j.contains("seq")) {
      if (!out.events.empty() || out.header) {
        throw Error(ErrorCode::Malformed, "header must be the first line (line " + std::to_string(lineno) + ")");
      }
      out.header = header_from(j);
      continue;
    }
    EventRecord e = event_from_json(j);
    const std::uint64_t expected = out.events.size() + 1;
    if (e.seq != expected) {
      throw Error(ErrorCode::SeqGap, "expected seq " + std::to_string(expected) + " but found " +
                                         std::to_string(e.seq) + " at line " + std::to_string(lineno));
    }
    out.events.push_back(std::move(e));
  }
  return out;
}

LogContents read_log_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open log " + path.string());
  return read_log(in);
}

EventLogWriter::EventLogWriter(const std::filesystem::path& path, OpenMode mode)
    : out_(path, mode == OpenMode::Append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw Error(ErrorCode::InvalidArgument, "cannot open log for writing: " + path.string());
}

void EventLogWriter::write_header(const LogHeader& header) {
  std::lock_guard lock(mu_);
  out_ << format_header(header) << '\n';
  out_.flush();
}

void EventLogWriter::append(const EventRecord& e) {
  std::lock_guard lock(mu_);
  out_ << format_event(e) << '\n';
  out_.flush();
}

void EventLogWriter::flush() {
  std::lock_guard lock(mu_);
  out_.flush();
}

}  // namespace crowdmod
