#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "crowdmod/event_log.hpp"

using namespace crowdmod;

namespace {

std::vector<EventRecord> sample_events() {
  std::vector<EventPayload> payloads{
      WorkerRegistered{"w1", IdentityClass::Signed, "en-US"},
      VideoIngested{"v", Millis{280'000}, "en-US", {Truth::Safe, Truth::Unsafe}},
      SegmentCreated{"v:0", "v", 0, {Millis{0}, Millis{140'000}}, false, 5, 2},
      TaskDispatched{"v:0", {"w1"}, at_ms(120'000), std::nullopt, 2, true, 7},
      GoldInjected{"gold:1", "gold-3", Truth::Unsafe, Millis{140'000}, "w1", "v:0", at_ms(120'000)},
      VoteReceived{"v1", "v:0", "w1", Opinion::No},
      SegmentFinalized{"v:0", Verdict::No, FinalizeReason::Deadline, {0.25}},
      VideoFinalized{"v", VideoStatus::Unsafe},
  };
  std::vector<EventRecord> out;
  std::uint64_t seq = 0;
  for (auto& p : payloads) out.push_back({++seq, at_ms(static_cast<std::int64_t>(seq) * 10), p});
  return out;
}

std::string render(const std::vector<EventRecord>& events, bool header = true) {
  std::ostringstream out;
  if (header) {
    LogHeader h;
    h.seed = 42;
    h.config_hash = config_hash(h.config);
    out << format_header(h) << '\n';
  }
  for (const auto& e : events) out << format_event(e) << '\n';
  return out.str();
}

LogContents parse(const std::string& text) {
  std::istringstream in(text);
  return read_log(in);
}

}  // namespace

TEST_CASE("every record kind round-trips") {
  for (const auto& e : sample_events()) {
    CHECK(event_from_json(event_to_json(e)) == e);
  }
}

TEST_CASE("record layout") {
  const auto j = event_to_json(sample_events()[5]);
  CHECK(j.at("seq") == 6);
  CHECK(j.at("kind") == "vote_received");
  CHECK(j.at("at") == 60);
  CHECK(j.at("payload").at("opinion") == "no");
}

TEST_CASE("reading a full log") {
  const auto events = sample_events();
  const auto log = parse(render(events));
  REQUIRE(log.header);
  CHECK(log.header->seed == 42);
  CHECK(log.header->schema == kLogSchemaVersion);
  CHECK(log.events == events);
  CHECK_FALSE(log.truncated);
}

TEST_CASE("empty input is an empty log") {
  const auto log = parse("");
  CHECK_FALSE(log.header);
  CHECK(log.events.empty());
}

TEST_CASE("a torn final line is dropped and reported") {
  const auto events = sample_events();
  std::string text = render(events);
  text.resize(text.size() - 20);
  const auto log = parse(text);
  CHECK(log.truncated);
  CHECK(log.events.size() == events.size() - 1);
}

TEST_CASE("corruption before the end is an error") {
  std::string text = render(sample_events());
  const auto pos = text.find("vote_received");
  text.replace(pos, 4, "\x01\x02\"}");
  CHECK_THROWS_AS(parse(text), Error);
}

TEST_CASE("sequence gaps are reported") {
  auto events = sample_events();
  events.erase(events.begin() + 3);
  try {
    parse(render(events));
    FAIL("expected a seq gap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SeqGap);
    CHECK(std::string(e.what()).find("expected seq 4") != std::string::npos);
  }
}

TEST_CASE("header must come first") {
  const auto events = sample_events();
  const std::string text = render({events[0]}, false) + render({}, true);
  CHECK_THROWS_AS(parse(text), Error);
}

TEST_CASE("unknown kinds and schema versions are rejected") {
  CHECK_THROWS_AS(parse("{\"seq\":1,\"kind\":\"teleport\",\"at\":0,\"payload\":{}}\n"), Error);
  CHECK_THROWS_AS(parse("{\"schema\":99}\n"), Error);
  CHECK_THROWS_AS(parse("{\"seq\":1,\"kind\":\"vote_received\",\"at\":0,\"payload\":{}}\n"), Error);
}

TEST_CASE("writer appends and flushes") {
  const auto path = std::filesystem::temp_directory_path() / "crowdmod-test-writer.log";
  const auto events = sample_events();
  {
    EventLogWriter w(path);
    w.write_header(LogHeader{});
    for (std::size_t i = 0; i < 4; ++i) w.append(events[i]);
    CHECK(read_log_file(path).events.size() == 4);
  }
  {
    EventLogWriter w(path, EventLogWriter::OpenMode::Append);
    for (std::size_t i = 4; i < events.size(); ++i) w.append(events[i]);
  }
  CHECK(read_log_file(path).events == events);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_log_file(path), Error);
}
