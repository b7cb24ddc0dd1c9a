#include "doctest.h"

#include <random>

#include "crowdmod/segmenter.hpp"

using namespace crowdmod;

namespace {

std::vector<Interval> intervals(std::int64_t duration_s, std::int64_t tau_s = 140) {
  SegmentationPolicy p;
  p.tau = Millis{tau_s * 1000};
  std::vector<Interval> out;
  for (const auto& s : segment_timeline(Millis{duration_s * 1000}, p)) out.push_back(s.interval);
  return out;
}

Interval iv(std::int64_t a, std::int64_t b) { return {Millis{a * 1000}, Millis{b * 1000}}; }

}  // namespace

TEST_CASE("exact multiple") { CHECK(intervals(280) == std::vector{iv(0, 140), iv(140, 280)}); }

TEST_CASE("single full segment") { CHECK(intervals(140) == std::vector{iv(0, 140)}); }

TEST_CASE("trailing remainder merges into the last segment") {
  CHECK(intervals(350) == std::vector{iv(0, 140), iv(140, 350)});
}

TEST_CASE("short video is one flagged segment") {
  const auto s = segment_timeline(Millis{100'000}, SegmentationPolicy{});
  REQUIRE(s.size() == 1);
  CHECK(s[0].short_segment);
  CHECK(s[0].interval == iv(0, 100));
}

TEST_CASE("without merging the remainder becomes its own slice") {
  SegmentationPolicy p;
  p.merge_remainder = false;
  const auto s = segment_timeline(Millis{350'000}, p);
  REQUIRE(s.size() == 3);
  CHECK(s[2].interval == iv(280, 350));
}

TEST_CASE("invalid input") {
  CHECK_THROWS_AS(segment_timeline(Millis{0}, SegmentationPolicy{}), Error);
  CHECK_THROWS_AS(segment_timeline(Millis{-5}, SegmentationPolicy{}), Error);
  SegmentationPolicy bad;
  bad.tau = Millis{0};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(segment_timeline(Millis{1000}, bad), Error);
}

TEST_CASE("random partitions are total and deterministic") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> tau_ms(1, 500'000);
  for (int k = 0; k < 20'000; ++k) {
    SegmentationPolicy p;
    p.tau = Millis{tau_ms(rng)};
    const Millis d{std::uniform_int_distribution<std::int64_t>(1, p.tau.count() * 20)(rng)};
    const auto a = segment_timeline(d, p);
    CHECK(a == segment_timeline(d, p));
    Millis cursor{0};
    for (const auto& s : a) {
      REQUIRE(s.interval.start == cursor);
      if (d >= p.tau) {
        REQUIRE(s.interval.length() >= p.tau);
        REQUIRE(s.interval.length() < 2 * p.tau);
      }
      cursor = s.interval.end;
    }
    REQUIRE(cursor == d);
  }
}
