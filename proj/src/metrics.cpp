#include "crowdmod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace crowdmod {

using nlohmann::json;

json summarize(const EngineState& state) {
  std::map<std::string, std::uint64_t> video_status;
  for (auto s : {VideoStatus::Pending, VideoStatus::InReview, VideoStatus::Safe, VideoStatus::Unsafe,
                 VideoStatus::Unresolved}) {
    video_status[std::string(to_string(s))] = 0;
  }
  std::map<std::string, std::uint64_t> segment_verdicts, gold_verdicts;
  for (auto v : {Verdict::Open, Verdict::Yes, Verdict::No, Verdict::Unresolved}) {
    segment_verdicts[std::string(to_string(v))] = 0;
    gold_verdicts[std::string(to_string(v))] = 0;
  }
  for (const auto& [id, v] : state.videos) video_status[std::string(to_string(v.status))] += 1;
  std::uint64_t real_segments = 0, gold_tasks = 0;
  for (const auto& [id, t] : state.tasks) {
    if (t.is_gold) {
      ++gold_tasks;
      gold_verdicts[std::string(to_string(t.verdict))] += 1;
    } else {
      ++real_segments;
      segment_verdicts[std::string(to_string(t.verdict))] += 1;
    }
  }
  std::map<std::string, std::uint64_t> bias;
  std::uint64_t credits = 0;
  for (auto b : {BiasFlag::None, BiasFlag::YesBiased, BiasFlag::NoBiased}) bias[std::string(to_string(b))] = 0;
  for (const auto& w : state.workers) {
    bias[std::string(to_string(w.bias_flag))] += 1;
    credits += w.credits;
  }
  return json{
      {"events", state.last_seq},
      {"videos", {{"total", state.videos.size()}, {"status", video_status}}},
      {"segments", {{"total", real_segments}, {"verdicts", segment_verdicts}}},
      {"gold_tasks", {{"total", gold_tasks}, {"verdicts", gold_verdicts}}},
      {"votes", state.votes_accepted},
      {"workers", {{"total", state.workers.size()}, {"bias_flags", bias}, {"credits_total", credits}}},
  };
}

std::optional<double> Confusion::accuracy() const {
  if (decided() == 0) return std::nullopt;
  return static_cast<double>(true_unsafe_judged_no + true_safe_judged_yes) / static_cast<double>(decided());
}

std::optional<double> percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

MetricsReport compute_metrics(const EngineState& state, std::span<const EventRecord> events,
                              const JudgmentPolicy& policy) {
  MetricsReport m;

  for (const auto& [id, t] : state.tasks) {
    if (t.is_gold) continue;
    const VideoCase& v = state.videos.at(t.video_id);
    if (t.verdict == Verdict::Open) { ++m.segments.open; continue; }
    if (t.verdict == Verdict::Unresolved) { ++m.segments.unresolved; continue; }
    if (t.index >= v.planted.size()) continue;
    const bool unsafe = v.planted[t.index] == Truth::Unsafe;
    const bool judged_no = t.verdict == Verdict::No;
    if (unsafe) (judged_no ? m.segments.true_unsafe_judged_no : m.segments.true_unsafe_judged_yes) += 1;
    else (judged_no ? m.segments.true_safe_judged_no : m.segments.true_safe_judged_yes) += 1;
  }

  std::vector<double> latencies;
  for (const auto& [id, v] : state.videos) {
    VideoRow row{id, v.status, std::nullopt, std::nullopt};
    if (!v.planted.empty()) {
      row.planted_unsafe = std::any_of(v.planted.begin(), v.planted.end(), [](Truth t) { return t == Truth::Unsafe; });
    }
    if (v.finalized_at) {
      row.latency_s = static_cast<double>((*v.finalized_at - v.created_at).count()) / 1000.0;
      latencies.push_back(*row.latency_s);
    }
    if (row.planted_unsafe && is_terminal(v.status)) {
      const bool predicted_unsafe = v.status != VideoStatus::Safe;
      if (*row.planted_unsafe) (predicted_unsafe ? m.videos_tp : m.videos_fn) += 1;
      else (predicted_unsafe ? m.videos_fp : m.videos_tn) += 1;
    }
    m.videos.push_back(std::move(row));
  }
  if (m.videos_tp + m.videos_fp > 0) {
    m.video_precision = static_cast<double>(m.videos_tp) / static_cast<double>(m.videos_tp + m.videos_fp);
  }
  if (m.videos_tp + m.videos_fn > 0) {
    m.video_recall = static_cast<double>(m.videos_tp) / static_cast<double>(m.videos_tp + m.videos_fn);
  }
  if (!latencies.empty()) {
    m.latency_mean_s = std::accumulate(latencies.begin(), latencies.end(), 0.0) / static_cast<double>(latencies.size());
    m.latency_p95_s = percentile(latencies, 95.0);
  }

  std::map<WorkerId, WorkerRow> rows;
  for (const auto& w : state.workers) {
    rows[w.worker_id] = WorkerRow{w.worker_id, w.identity_class, w.credits, w.accuracy, w.bias_flag, 0, 0, 0, std::nullopt};
  }
  for (const auto& e : events) {
    if (const auto* d = std::get_if<TaskDispatched>(&e.payload)) {
      for (const auto& wid : d->workers) rows[wid].assignments += 1;
    } else if (const auto* g = std::get_if<GoldInjected>(&e.payload)) {
      rows[g->worker_id].gold_assignments += 1;
    } else if (const auto* v = std::get_if<VoteReceived>(&e.payload)) {
      rows[v->worker_id].votes += 1;
    }
  }
  // Votes a worker had cast when its bias flag first went up.
  {
    std::map<WorkerId, std::uint64_t> votes_so_far;
    std::map<WorkerId, GoldStats> stats;
    std::map<SegmentId, Truth> gold_label;
    std::map<SegmentId, std::vector<std::pair<WorkerId, Opinion>>> gold_votes;
    for (const auto& e : events) {
      if (const auto* g = std::get_if<GoldInjected>(&e.payload)) {
        gold_label[g->segment_id] = g->label;
      } else if (const auto* v = std::get_if<VoteReceived>(&e.payload)) {
        votes_so_far[v->worker_id] += 1;
        if (gold_label.count(v->segment_id)) gold_votes[v->segment_id].emplace_back(v->worker_id, v->opinion);
      } else if (const auto* f = std::get_if<SegmentFinalized>(&e.payload)) {
        auto it = gold_label.find(f->segment_id);
        if (it == gold_label.end()) continue;
        for (const auto& [wid, op] : gold_votes[f->segment_id]) {
          auto& s = stats[wid];
          if (it->second == Truth::Safe) {
            ++s.safe_seen;
            if (op == Opinion::Yes) ++s.safe_yes;
          } else {
            ++s.unsafe_seen;
            if (op == Opinion::Yes) ++s.unsafe_yes;
          }
          auto& row = rows[wid];
          if (!row.flagged_after_votes && evaluate_bias(s, policy) != BiasFlag::None) {
            row.flagged_after_votes = votes_so_far[wid];
          }
        }
      }
    }
  }
  std::uint64_t votes = 0, assignments = 0;
  for (auto& [id, row] : rows) {
    votes += row.votes;
    assignments += row.assignments + row.gold_assignments;
    m.workers.push_back(row);
  }
  if (assignments > 0) m.utilization = static_cast<double>(votes) / static_cast<double>(assignments);
  return m;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const MetricsReport& m) {
  json workers = json::array();
  for (const auto& w : m.workers) {
    workers.push_back({{"worker_id", w.worker_id},
                       {"identity_class", to_string(w.identity_class)},
                       {"credits", w.credits},
                       {"accuracy", w.accuracy},
                       {"bias_flag", to_string(w.bias_flag)},
                       {"assignments", w.assignments},
                       {"gold_assignments", w.gold_assignments},
                       {"votes", w.votes},
                       {"flagged_after_votes", w.flagged_after_votes ? json(*w.flagged_after_votes) : json(nullptr)}});
  }
  return json{
      {"segments",
       {{"true_unsafe_judged_no", m.segments.true_unsafe_judged_no},
        {"true_unsafe_judged_yes", m.segments.true_unsafe_judged_yes},
        {"true_safe_judged_no", m.segments.true_safe_judged_no},
        {"true_safe_judged_yes", m.segments.true_safe_judged_yes},
        {"unresolved", m.segments.unresolved},
        {"open", m.segments.open},
        {"accuracy", opt(m.segments.accuracy())}}},
      {"videos",
       {{"tp", m.videos_tp},
        {"fp", m.videos_fp},
        {"fn", m.videos_fn},
        {"tn", m.videos_tn},
        {"precision_unsafe", opt(m.video_precision)},
        {"recall_unsafe", opt(m.video_recall)}}},
      {"latency_s", {{"mean", opt(m.latency_mean_s)}, {"p95", opt(m.latency_p95_s)}}},
      {"utilization", opt(m.utilization)},
      {"workers", workers},
  };
}

void write_csv(const MetricsReport& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "segments.csv");
    out << "truth,verdict,count\n";
    out << "unsafe,no," << m.segments.true_unsafe_judged_no << '\n';
    out << "unsafe,yes," << m.segments.true_unsafe_judged_yes << '\n';
    out << "safe,no," << m.segments.true_safe_judged_no << '\n';
    out << "safe,yes," << m.segments.true_safe_judged_yes << '\n';
    out << "any,unresolved," << m.segments.unresolved << '\n';
    out << "any,open," << m.segments.open << '\n';
  }
  {
    std::ofstream out(dir / "videos.csv");
    out << "video_id,status,planted_unsafe,latency_s\n";
    for (const auto& v : m.videos) {
      out << v.video_id << ',' << to_string(v.status) << ','
          << (v.planted_unsafe ? (*v.planted_unsafe ? "1" : "0") : "") << ',';
      if (v.latency_s) out << *v.latency_s;
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "workers.csv");
    out << "worker_id,identity_class,credits,accuracy,bias_flag,assignments,gold_assignments,votes\n";
    for (const auto& w : m.workers) {
      out << w.worker_id << ',' << to_string(w.identity_class) << ',' << w.credits << ',' << w.accuracy << ','
          << to_string(w.bias_flag) << ',' << w.assignments << ',' << w.gold_assignments << ',' << w.votes << '\n';
    }
  }
}

}  // namespace crowdmod
