#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "crowdmod/metrics.hpp"

using namespace crowdmod;

namespace {

void vote_all(Engine& e, const SegmentId& s, Opinion o, Timestamp now) {
  const auto workers = e.snapshot().tasks.at(s).assigned_workers;
  for (const auto& w : workers) e.submit_vote(s, w, o, now);
}

std::unique_ptr<Engine> scripted_engine() {
  PipelineConfig c;
  c.assignment.gold_injection_rate = 0.0;
  c.assignment.cooldown = Millis{0};
  auto owned = std::make_unique<Engine>(c);
  Engine& e = *owned;
  for (int i = 0; i < 5; ++i) e.register_worker("w" + std::to_string(i), IdentityClass::Signed, "en-US", at_ms(0));
  e.ingest_video("tp", Millis{280'000}, "en-US", at_ms(0), {Truth::Safe, Truth::Unsafe});
  e.ingest_video("tn", Millis{100'000}, "en-US", at_ms(0), {Truth::Safe});
  e.ingest_video("fp", Millis{100'000}, "en-US", at_ms(0), {Truth::Safe});
  e.ingest_video("fn", Millis{100'000}, "en-US", at_ms(0), {Truth::Unsafe});
  e.ingest_video("open", Millis{100'000}, "en-US", at_ms(0), {Truth::Unsafe});
  vote_all(e, "tp:0", Opinion::Yes, at_ms(10'000));
  vote_all(e, "tp:1", Opinion::No, at_ms(20'000));
  vote_all(e, "tn:0", Opinion::Yes, at_ms(30'000));
  vote_all(e, "fp:0", Opinion::No, at_ms(40'000));
  vote_all(e, "fn:0", Opinion::Yes, at_ms(50'000));
  return owned;
}

}  // namespace

TEST_CASE("percentile uses nearest rank") {
  CHECK_FALSE(percentile({}, 95));
  CHECK(*percentile({3.0}, 95) == 3.0);
  CHECK(*percentile({5, 1, 4, 2, 3}, 50) == 3.0);
  CHECK(*percentile({5, 1, 4, 2, 3}, 100) == 5.0);
  CHECK(*percentile({5, 1, 4, 2, 3}, 0) == 1.0);
  std::vector<double> hundred;
  for (int i = 1; i <= 100; ++i) hundred.push_back(i);
  CHECK(*percentile(hundred, 95) == 95.0);
}

TEST_CASE("confusion and video outcomes") {
  const auto owned = scripted_engine();
  const Engine& e = *owned;
  const auto m = compute_metrics(e.snapshot(), e.events(), e.config().judgment);
  CHECK(m.segments.true_safe_judged_yes == 2);
  CHECK(m.segments.true_unsafe_judged_no == 1);
  CHECK(m.segments.true_safe_judged_no == 1);
  CHECK(m.segments.true_unsafe_judged_yes == 1);
  CHECK(m.segments.open == 1);
  CHECK(m.segments.decided() == 5);
  CHECK(*m.segments.accuracy() == doctest::Approx(0.6));
  CHECK(m.videos_tp == 1);
  CHECK(m.videos_tn == 1);
  CHECK(m.videos_fp == 1);
  CHECK(m.videos_fn == 1);
  CHECK(*m.video_precision == doctest::Approx(0.5));
  CHECK(*m.video_recall == doctest::Approx(0.5));
  CHECK(*m.latency_mean_s == doctest::Approx((20 + 30 + 40 + 50) / 4.0));
  CHECK(*m.latency_p95_s == 50.0);
  REQUIRE(m.workers.size() == 5);
  CHECK(m.workers[0].votes == 5);
  CHECK(m.workers[0].assignments == 6);
  CHECK(m.workers[0].credits == 5);
  CHECK(*m.utilization == doctest::Approx(25.0 / 30.0));
  CHECK(Confusion{}.accuracy() == std::nullopt);
}

TEST_CASE("summaries depend only on state") {
  const auto owned = scripted_engine();
  const Engine& e = *owned;
  const auto s = summarize(e.snapshot());
  CHECK(s["videos"]["total"] == 5);
  CHECK(s["videos"]["status"]["safe"] == 2);
  CHECK(s["videos"]["status"]["unsafe"] == 2);
  CHECK(s["videos"]["status"]["in-review"] == 1);
  CHECK(s["segments"]["total"] == 6);
  CHECK(s["segments"]["verdicts"]["open"] == 1);
  CHECK(s["votes"] == 25);
  CHECK(s["workers"]["credits_total"] == 25);
  CHECK(summarize(Engine(LogContents{e.header(), e.events(), false}).snapshot()) == s);
  CHECK(summarize(EngineState{})["videos"]["total"] == 0);
}

TEST_CASE("bias flag timing is reconstructed from the log") {
  PipelineConfig c;
  c.assignment.gold_injection_rate = 1.0;
  c.assignment.cooldown = Millis{0};
  c.assignment.quorum_m = 1;
  c.judgment.min_gold_for_bias = 3;
  c.gold_bank = {{"g", Truth::Unsafe, Millis{140'000}}};
  Engine e(c);
  e.register_worker("yes-man", IdentityClass::Signed, "en-US", at_ms(0));
  for (int i = 0; i < 5; ++i) {
    const auto id = "v" + std::to_string(i);
    e.ingest_video(id, Millis{100'000}, "en-US", at_ms(i * 1000), {Truth::Safe});
    const auto snap = e.snapshot();
    for (const auto& [sid, t] : snap.tasks) {
      if (!is_terminal(t.verdict) && t.is_assigned("yes-man") && !t.has_vote_from("yes-man")) e.submit_vote(sid, "yes-man", Opinion::Yes, at_ms(i * 1000 + 1));
    }
  }
  const auto m = compute_metrics(e.snapshot(), e.events(), e.config().judgment);
  REQUIRE(m.workers.size() == 1);
  CHECK(m.workers[0].bias_flag == BiasFlag::YesBiased);
  REQUIRE(m.workers[0].flagged_after_votes);
  CHECK(*m.workers[0].flagged_after_votes == 6);
  CHECK(m.workers[0].gold_assignments == 3);
}

TEST_CASE("reports serialize to json and csv") {
  const auto owned = scripted_engine();
  const Engine& e = *owned;
  const auto m = compute_metrics(e.snapshot(), e.events(), e.config().judgment);
  const auto j = to_json(m);
  CHECK(j.contains("workers"));
  const auto dir = std::filesystem::temp_directory_path() / "crowdmod-test-metrics";
  std::filesystem::remove_all(dir);
  write_csv(m, dir);
  std::ifstream videos(dir / "videos.csv");
  std::string line;
  std::getline(videos, line);
  CHECK(line == "video_id,status,planted_unsafe,latency_s");
  std::size_t rows = 0;
  while (std::getline(videos, line)) ++rows;
  CHECK(rows == 5);
  CHECK(std::filesystem::exists(dir / "segments.csv"));
  CHECK(std::filesystem::exists(dir / "workers.csv"));
  std::filesystem::remove_all(dir);
}
