#include "crowdmod/sim.hpp"

#include <fstream>
#include <queue>
#include <unordered_map>
#include <variant>

#include "crowdmod/segmenter.hpp"

namespace crowdmod::sim {

using nlohmann::json;

void SimWorkerModel::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(true_accuracy) || !prob(yes_bias) || !prob(availability)) {
    throw Error(ErrorCode::InvalidConfig, "worker model probabilities must lie in [0,1]");
  }
  if (!(latency_sigma >= 0.0) || !std::isfinite(latency_mu)) {
    throw Error(ErrorCode::InvalidConfig, "worker latency parameters invalid");
  }
}

void SimStreamModel::validate() const {
  if (!(video_arrival_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "stream.video_arrival_rate must be > 0");
  if (!(duration_min_s > 0.0) || !(duration_max_s >= duration_min_s)) {
    throw Error(ErrorCode::InvalidConfig, "stream duration range invalid");
  }
  if (!(unsafe_segment_rate >= 0.0 && unsafe_segment_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "stream.unsafe_segment_rate must be in [0,1]");
  }
  if (locale_mix.empty()) throw Error(ErrorCode::InvalidConfig, "stream.locale_mix must be non-empty");
  for (const auto& [tag, w] : locale_mix) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidConfig, "locale weights must be non-negative");
  }
}

void Scenario::validate() const {
  config.validate();
  stream.validate();
  for (const auto& g : workers) g.model.validate();
  if (horizon <= Millis{0}) throw Error(ErrorCode::InvalidConfig, "horizon must be positive");
  if (!(locale_mismatch_penalty >= 0.0 && locale_mismatch_penalty <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "locale_mismatch_penalty must be in [0,1]");
  }
}

std::vector<std::string> preset_names() { return {"desk", "survey", "youtube-scale"}; }

Scenario preset(std::string_view name) {
  Scenario s;
  s.name = std::string(name);
  s.config.gold_bank = make_gold_bank(20, s.config.segmentation.tau);
  if (name == "desk") {
    s.stream.video_arrival_rate = 1.0 / 900.0;
    s.stream.max_videos = 100;
    s.stream.locale_mix = {{"en-US", 0.6}, {"en-GB", 0.2}, {"hi-IN", 0.2}};
    s.workers = {
        {"s-us-", 20, IdentityClass::Signed, "en-US", {0.85, 0.0, std::log(30.0), 0.8, 0.95}},
        {"s-in-", 10, IdentityClass::Signed, "hi-IN", {0.85, 0.0, std::log(30.0), 0.8, 0.95}},
        {"u-gb-", 18, IdentityClass::Unsigned, "en-GB", {0.75, 0.0, std::log(30.0), 0.8, 0.9}},
        {"u-bias-", 2, IdentityClass::Unsigned, "en-US", {0.75, 1.0, std::log(30.0), 0.8, 0.9}},
    };
    s.horizon = Millis{200'000'000};
  } else if (name == "survey") {
    // 45 surveyed viewers, 71% willing to judge; binary answers only.
    s.stream.video_arrival_rate = 1.0 / 1200.0;
    s.stream.max_videos = 100;
    s.workers = {
        {"s-", 20, IdentityClass::Signed, "en-US", {0.8, 0.0, std::log(30.0), 0.8, 1.0}},
        {"u-", 12, IdentityClass::Unsigned, "en-US", {0.75, 0.0, std::log(30.0), 0.8, 1.0}},
    };
    s.horizon = Millis{200'000'000};
  } else if (name == "youtube-scale") {
    // Illustrative only: ~5 h of uploads per second at a 10 min mean duration,
    // and roughly 350 new viewers per second over the horizon.
    s.stream.video_arrival_rate = 30.0;
    s.stream.duration_min_s = 60.0;
    s.stream.duration_max_s = 1140.0;
    s.stream.max_videos = 300;
    s.stream.locale_mix = {{"en-US", 0.5}, {"hi-IN", 0.3}, {"es-ES", 0.2}};
    s.workers = {
        {"s-us-", 2500, IdentityClass::Signed, "en-US", {0.85, 0.0, std::log(30.0), 0.8, 0.9}},
        {"s-in-", 1500, IdentityClass::Signed, "hi-IN", {0.85, 0.0, std::log(30.0), 0.8, 0.9}},
        {"u-es-", 1000, IdentityClass::Unsigned, "es-ES", {0.75, 0.0, std::log(30.0), 0.8, 0.8}},
        {"u-us-", 2000, IdentityClass::Unsigned, "en-US", {0.75, 0.0, std::log(30.0), 0.8, 0.8}},
    };
    s.horizon = Millis{10'000};
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "'");
  }
  return s;
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "scenario must be a JSON object");
  Scenario s = j.contains("preset") ? preset(j.at("preset").get<std::string>()) : Scenario{};
  if (j.contains("name")) read(j, "name", s.name);
  if (j.contains("pipeline")) {
    json merged = s.config;
    merged.merge_patch(j.at("pipeline"));
    from_json(merged, s.config);
  }
  if (j.contains("stream")) {
    const auto& st = j.at("stream");
    read(st, "video_arrival_rate", s.stream.video_arrival_rate);
    read(st, "duration_min_s", s.stream.duration_min_s);
    read(st, "duration_max_s", s.stream.duration_max_s);
    read(st, "unsafe_segment_rate", s.stream.unsafe_segment_rate);
    read(st, "max_videos", s.stream.max_videos);
    if (st.contains("locale_mix")) {
      s.stream.locale_mix.clear();
      for (const auto& [tag, w] : st.at("locale_mix").items()) s.stream.locale_mix.emplace_back(tag, w.get<double>());
    }
  }
  if (j.contains("workers")) {
    s.workers.clear();
    for (const auto& g : j.at("workers")) {
      WorkerGroup wg;
      read(g, "prefix", wg.prefix);
      read(g, "count", wg.count);
      std::string identity = "signed";
      read(g, "identity_class", identity);
      wg.identity_class = parse_identity_class(identity);
      read(g, "locale", wg.locale);
      read(g, "true_accuracy", wg.model.true_accuracy);
      read(g, "yes_bias", wg.model.yes_bias);
      if (g.contains("latency_median_s")) wg.model.latency_mu = std::log(g.at("latency_median_s").get<double>());
      read(g, "latency_sigma", wg.model.latency_sigma);
      read(g, "availability", wg.model.availability);
      s.workers.push_back(std::move(wg));
    }
  }
  if (j.contains("horizon_s")) s.horizon = seconds_to_millis(j.at("horizon_s").get<double>());
  read(j, "locale_mismatch_penalty", s.locale_mismatch_penalty);
  s.validate();
  return s;
}

json scenario_to_json(const Scenario& s) {
  json mix = json::object();
  for (const auto& [tag, w] : s.stream.locale_mix) mix[tag] = w;
  json workers = json::array();
  for (const auto& g : s.workers) {
    workers.push_back({{"prefix", g.prefix},
                       {"count", g.count},
                       {"identity_class", to_string(g.identity_class)},
                       {"locale", g.locale},
                       {"true_accuracy", g.model.true_accuracy},
                       {"yes_bias", g.model.yes_bias},
                       {"latency_median_s", std::exp(g.model.latency_mu)},
                       {"latency_sigma", g.model.latency_sigma},
                       {"availability", g.model.availability}});
  }
  return json{{"name", s.name},
              {"pipeline", s.config},
              {"stream",
               {{"video_arrival_rate", s.stream.video_arrival_rate},
                {"duration_min_s", s.stream.duration_min_s},
                {"duration_max_s", s.stream.duration_max_s},
                {"unsafe_segment_rate", s.stream.unsafe_segment_rate},
                {"max_videos", s.stream.max_videos},
                {"locale_mix", mix}}},
              {"workers", workers},
              {"horizon_s", static_cast<double>(s.horizon.count()) / 1000.0},
              {"locale_mismatch_penalty", s.locale_mismatch_penalty}};
}

namespace {

struct Arrival {};
struct VoteDue {
  SegmentId segment;
  WorkerId worker;
  Opinion opinion;
};

struct Pending {
  Timestamp at;
  std::uint64_t seq;
  std::variant<Arrival, VoteDue> what;

  bool operator>(const Pending& o) const { return std::tie(at, seq) > std::tie(o.at, o.seq); }
};

struct SimWorker {
  SimWorkerModel model;
  std::string locale;
};

struct SegmentTruth {
  Truth truth;
  std::string locale;
};

}  // namespace

SimResult run_simulation(const Scenario& scenario, std::uint64_t seed, Engine::Observer observer) {
  scenario.validate();
  PipelineConfig config = scenario.config;
  config.seed = seed;
  config.mode = Mode::Simulation;
  Engine engine(config);
  if (observer) engine.set_observer(std::move(observer));

  std::seed_seq seq{seed, std::uint64_t{0x5157}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::unordered_map<WorkerId, SimWorker> workers;
  for (const auto& g : scenario.workers) {
    for (std::size_t i = 0; i < g.count; ++i) {
      WorkerId id = g.prefix + std::to_string(i);
      engine.register_worker(id, g.identity_class, g.locale, at_ms(0));
      workers.emplace(id, SimWorker{g.model, g.locale});
    }
  }

  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  std::uint64_t queue_seq = 0;
  auto push = [&](Timestamp at, std::variant<Arrival, VoteDue> what) { queue.push({at, queue_seq++, std::move(what)}); };

  std::exponential_distribution<double> gap(scenario.stream.video_arrival_rate);
  std::uniform_real_distribution<double> duration_s(scenario.stream.duration_min_s, scenario.stream.duration_max_s);
  std::vector<double> locale_weights;
  for (const auto& [tag, w] : scenario.stream.locale_mix) locale_weights.push_back(w);
  std::discrete_distribution<std::size_t> pick_locale(locale_weights.begin(), locale_weights.end());

  SimResult result;
  const Timestamp horizon_end = at_ms(0) + scenario.horizon;
  auto schedule_arrival = [&](Timestamp from) {
    if (result.videos_generated >= scenario.stream.max_videos) return;
    const Timestamp t = from + seconds_to_millis(gap(rng));
    if (t <= horizon_end) push(t, Arrival{});
  };
  schedule_arrival(at_ms(0));

  std::unordered_map<SegmentId, SegmentTruth> truth;
  std::uint64_t cursor = engine.last_seq();

  auto dispatch_votes = [&](Timestamp now) {
    for (const auto& e : engine.events_since(cursor)) {
      cursor = e.seq;
      auto plan = [&](const SegmentId& sid, const WorkerId& wid, Truth t, double penalty) {
        const SimWorker& w = workers.at(wid);
        if (unit(rng) >= w.model.availability) {
          ++result.votes_declined;
          return;
        }
        const Opinion op = sample_vote(w.model, t, rng, penalty);
        push(now + sample_latency(w.model, rng), VoteDue{sid, wid, op});
      };
      if (const auto* d = std::get_if<TaskDispatched>(&e.payload)) {
        const SegmentTruth& st = truth.at(d->segment_id);
        for (const auto& wid : d->workers) {
          const double penalty =
              locale_match(workers.at(wid).locale, st.locale) < 1.0 ? scenario.locale_mismatch_penalty : 0.0;
          plan(d->segment_id, wid, st.truth, penalty);
        }
      } else if (const auto* g = std::get_if<GoldInjected>(&e.payload)) {
        plan(g->segment_id, g->worker_id, g->label, 0.0);
      }
    }
  };

  for (;;) {
    const auto due = engine.next_due();
    if (queue.empty() && !due) break;
    if (due && (queue.empty() || *due <= queue.top().at)) {
      engine.tick(*due);
      dispatch_votes(*due);
      continue;
    }
    Pending p = queue.top();
    queue.pop();
    engine.tick(p.at);
    dispatch_votes(p.at);
    if (std::holds_alternative<Arrival>(p.what)) {
      const VideoId vid = "vid-" + std::to_string(++result.videos_generated);
      const Millis duration = std::max(Millis{1}, seconds_to_millis(duration_s(rng)));
      const std::string& locale = scenario.stream.locale_mix[pick_locale(rng)].first;
      const auto slices = segment_timeline(duration, config.segmentation);
      std::vector<Truth> planted;
      for (std::size_t i = 0; i < slices.size(); ++i) {
        planted.push_back(unit(rng) < scenario.stream.unsafe_segment_rate ? Truth::Unsafe : Truth::Safe);
      }
      for (std::size_t i = 0; i < slices.size(); ++i) {
        truth[vid + ":" + std::to_string(i)] = SegmentTruth{planted[i], locale};
      }
      engine.ingest_video(vid, duration, locale, p.at, planted);
      dispatch_votes(p.at);
      schedule_arrival(p.at);
    } else {
      const auto& v = std::get<VoteDue>(p.what);
      try {
        engine.submit_vote(v.segment, v.worker, v.opinion, p.at);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Terminal) throw;
        ++result.votes_late;
      }
      dispatch_votes(p.at);
    }
  }

  result.header = engine.header();
  result.events = engine.events();
  result.state = engine.snapshot();
  result.metrics = compute_metrics(result.state, result.events, config.judgment);
  result.summary = summarize(result.state);
  return result;
}

json report_json(const SimResult& r) {
  json j = to_json(r.metrics);
  j["summary"] = r.summary;
  j["simulation"] = {{"videos_generated", r.videos_generated},
                     {"votes_declined", r.votes_declined},
                     {"votes_late", r.votes_late},
                     {"seed", r.header.seed},
                     {"config_hash", r.header.config_hash}};
  return j;
}

void write_log(const LogHeader& header, std::span<const EventRecord> events, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << format_header(header) << '\n';
  for (const auto& e : events) out << format_event(e) << '\n';
}

}  // namespace crowdmod::sim
