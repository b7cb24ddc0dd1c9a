#include "doctest.h"

#include <map>
#include <random>
#include <sstream>

#include "crowdmod/sim.hpp"

using namespace crowdmod;

namespace {

sim::WorkerGroup group(std::string prefix, std::size_t n, double accuracy, IdentityClass cls = IdentityClass::Signed,
                       double yes_bias = 0.0) {
  sim::WorkerGroup g;
  g.prefix = std::move(prefix);
  g.count = n;
  g.identity_class = cls;
  g.model.true_accuracy = accuracy;
  g.model.yes_bias = yes_bias;
  g.model.availability = 1.0;
  return g;
}

std::string serialize(const sim::SimResult& r) {
  std::ostringstream out;
  out << format_header(r.header) << '\n';
  for (const auto& e : r.events) out << format_event(e) << '\n';
  return out.str();
}

sim::Scenario small_desk(std::size_t videos) {
  auto s = sim::preset("desk");
  s.stream.max_videos = videos;
  return s;
}

// One always-yes worker in a pool the size of the quorum, so it votes on
// every segment. Returns total votes cast when the flag first went up.
std::vector<std::optional<std::uint64_t>> votes_at_flag(int runs) {
  sim::Scenario s;
  s.config.assignment.cooldown = Millis{0};
  s.stream.video_arrival_rate = 1.0 / 300.0;
  s.stream.duration_min_s = 280.0;
  s.stream.duration_max_s = 280.0;
  s.stream.max_videos = 400;
  s.workers = {group("w", 4, 0.85), group("bias", 1, 0.85, IdentityClass::Signed, 1.0)};
  std::vector<std::optional<std::uint64_t>> out;
  for (int run = 0; run < runs; ++run) {
    const auto r = sim::run_simulation(s, 5000 + static_cast<std::uint64_t>(run));
    for (const auto& w : r.metrics.workers) {
      if (w.worker_id == "bias0") out.push_back(w.flagged_after_votes);
    }
  }
  return out;
}

double fraction_within(const std::vector<std::optional<std::uint64_t>>& v, std::uint64_t bound) {
  const auto n = std::count_if(v.begin(), v.end(), [&](const auto& x) { return x && *x <= bound; });
  return static_cast<double>(n) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("sample_vote") {
  std::mt19937_64 rng(5);
  sim::SimWorkerModel perfect;
  perfect.true_accuracy = 1.0;
  CHECK(sim::sample_vote(perfect, Truth::Unsafe, rng) == Opinion::No);
  CHECK(sim::sample_vote(perfect, Truth::Safe, rng) == Opinion::Yes);
  sim::SimWorkerModel yes_man;
  yes_man.yes_bias = 1.0;
  for (int i = 0; i < 100; ++i) CHECK(sim::sample_vote(yes_man, Truth::Unsafe, rng) == Opinion::Yes);

  sim::SimWorkerModel m;
  m.true_accuracy = 0.8;
  int yes = 0;
  constexpr int kDraws = 100'000;
  for (int i = 0; i < kDraws; ++i) yes += sim::sample_vote(m, Truth::Safe, rng) == Opinion::Yes;
  CHECK(std::abs(static_cast<double>(yes) / kDraws - 0.8) <= 0.005);
}

TEST_CASE("sample_latency is positive") {
  std::mt19937_64 rng(6);
  sim::SimWorkerModel m;
  for (int i = 0; i < 1000; ++i) CHECK(sim::sample_latency(m, rng) >= Millis{1});
  m.latency_sigma = 0.0;
  CHECK(sim::sample_latency(m, rng) == Millis{30'000});
}

TEST_CASE("same seed gives a byte-identical log") {
  const auto s = small_desk(30);
  const auto a = sim::run_simulation(s, 7);
  const auto b = sim::run_simulation(s, 7);
  const auto c = sim::run_simulation(s, 8);
  CHECK(serialize(a) == serialize(b));
  CHECK(a.summary == b.summary);
  CHECK(serialize(a) != serialize(c));
  CHECK(a.header.seed == 7);
  CHECK(Engine(LogContents{a.header, a.events, false}).snapshot() == a.state);
}

TEST_CASE("perfect workers make no video mistakes") {
  sim::Scenario s;
  s.config.assignment.cooldown = Millis{0};
  s.stream.max_videos = 80;
  s.stream.unsafe_segment_rate = 0.2;
  s.workers = {group("p", 10, 1.0)};
  const auto r = sim::run_simulation(s, 3);
  REQUIRE(r.metrics.videos_tp > 0);
  CHECK(r.metrics.videos_fp == 0);
  CHECK(r.metrics.videos_fn == 0);
  CHECK(*r.metrics.video_precision == 1.0);
  CHECK(*r.metrics.video_recall == 1.0);
  CHECK(r.metrics.segments.unresolved == 0);
}

TEST_CASE("no worker receives real tasks faster than the cooldown") {
  const auto s = small_desk(100);
  const auto r = sim::run_simulation(s, 11);
  const auto cooldown = s.config.assignment.cooldown;
  std::map<WorkerId, Timestamp> last;
  std::size_t dispatches = 0;
  for (const auto& e : r.events) {
    const auto* d = std::get_if<TaskDispatched>(&e.payload);
    if (!d) continue;
    for (const auto& w : d->workers) {
      if (auto it = last.find(w); it != last.end()) CHECK(e.at - it->second >= cooldown);
      last[w] = e.at;
      ++dispatches;
    }
  }
  CHECK(dispatches > 100);
}

TEST_CASE("unsigned workers only get work when no signed worker is eligible") {
  sim::Scenario s;
  s.config.assignment.gold_injection_rate = 0.0;
  s.stream.max_videos = 60;
  s.stream.video_arrival_rate = 1.0 / 120.0;
  s.workers = {group("s", 8, 0.7), group("u", 8, 0.95, IdentityClass::Unsigned)};
  const auto r = sim::run_simulation(s, 21);
  const auto cooldown = s.config.assignment.cooldown;
  std::map<WorkerId, Timestamp> last;
  std::map<SegmentId, std::vector<WorkerId>> on_task;
  std::size_t unsigned_picks = 0;
  for (const auto& e : r.events) {
    const auto* d = std::get_if<TaskDispatched>(&e.payload);
    if (!d) continue;
    auto& assigned = on_task[d->segment_id];
    const bool any_unsigned = std::any_of(d->workers.begin(), d->workers.end(), [](const WorkerId& w) { return w[0] == 'u'; });
    if (any_unsigned) {
      ++unsigned_picks;
      for (int i = 0; i < 8; ++i) {
        const WorkerId w = "s" + std::to_string(i);
        const bool picked = std::find(d->workers.begin(), d->workers.end(), w) != d->workers.end();
        const bool already = std::find(assigned.begin(), assigned.end(), w) != assigned.end();
        const auto it = last.find(w);
        const bool resting = it != last.end() && e.at - it->second < cooldown;
        CHECK((picked || already || resting));
      }
    }
    for (const auto& w : d->workers) {
      last[w] = e.at;
      assigned.push_back(w);
    }
  }
  CHECK(unsigned_picks > 0);
}

TEST_CASE("presets and scenario files") {
  for (const auto& name : sim::preset_names()) CHECK_NOTHROW(sim::preset(name).validate());
  CHECK(sim::preset_names().size() == 3);
  CHECK_THROWS_AS(sim::preset("nope"), Error);

  const auto j = parse_config_text(R"({
    // overrides on top of a preset
    "preset": "survey",
    "pipeline": {"assignment": {"cooldown_s": 0}},
    "stream": {"max_videos": 3},
    "workers": [{"prefix": "x", "count": 5, "identity_class": "unsigned", "true_accuracy": 0.9}],
    "horizon_s": 1000
  })");
  const auto s = sim::scenario_from_json(j);
  CHECK(s.name == "survey");
  CHECK(s.config.assignment.cooldown == Millis{0});
  CHECK(s.stream.max_videos == 3);
  REQUIRE(s.workers.size() == 1);
  CHECK(s.workers[0].identity_class == IdentityClass::Unsigned);
  CHECK(s.horizon == Millis{1'000'000});
  CHECK(sim::scenario_from_json(sim::scenario_to_json(s)).workers[0].model.true_accuracy == 0.9);

  auto code = [](const nlohmann::json& bad) {
    try {
      sim::scenario_from_json(bad);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Malformed;
  };
  CHECK(code(nlohmann::json::array()) == ErrorCode::InvalidConfig);
  CHECK(code({{"preset", "nope"}}) == ErrorCode::InvalidConfig);
  CHECK(code({{"stream", {{"max_videos", "many"}}}}) == ErrorCode::InvalidConfig);
  CHECK(code({{"stream", {{"unsafe_segment_rate", 2.0}}}}) == ErrorCode::InvalidConfig);
  CHECK(code({{"workers", {{{"true_accuracy", 1.5}}}}}) == ErrorCode::InvalidConfig);
}

TEST_CASE("youtube-scale preset runs") {
  const auto r = sim::run_simulation(sim::preset("youtube-scale"), 1);
  CHECK(r.videos_generated > 0);
  CHECK(r.state.workers.size() == 7000);
}

// The stated bound is min_gold_for_bias / gold_injection_rate = 200 votes,
// but a flag needs 20 gold answers and 20 gold tasks arrive after about
// 200 real votes on average, so the bound is met in roughly a third of runs.
TEST_CASE("biased worker is flagged within min_gold / rate votes" * doctest::should_fail()) {
  const auto v = votes_at_flag(100);
  MESSAGE("flagged within 200 votes in " << fraction_within(v, 200) << " of runs");
  CHECK(fraction_within(v, 200) >= 0.95);
}

TEST_CASE("biased worker is flagged within twice min_gold / rate votes") {
  const auto v = votes_at_flag(100);
  CHECK(std::all_of(v.begin(), v.end(), [](const auto& x) { return x.has_value(); }));
  CHECK(fraction_within(v, 400) >= 0.95);
}
