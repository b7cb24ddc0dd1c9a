#include "crowdmod/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace crowdmod {

using nlohmann::json;

void PipelineConfig::validate() const {
  segmentation.validate();
  assignment.validate();
  judgment.validate();
  if (assignment.gold_injection_rate > 0.0 && gold_bank.empty()) {
    throw Error(ErrorCode::InvalidConfig, "gold_injection_rate > 0 requires a non-empty gold_bank");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range");
}

std::vector<GoldItem> make_gold_bank(std::size_t n, Millis duration) {
  std::vector<GoldItem> bank;
  bank.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bank.push_back({"gold-" + std::to_string(i), i % 2 == 0 ? Truth::Safe : Truth::Unsafe, duration});
  }
  return bank;
}

namespace {

double seconds(Millis m) { return static_cast<double>(m.count()) / 1000.0; }

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_seconds(const json& j, const char* key, Millis& out) {
  if (!j.contains(key)) return;
  double s = 0;
  read(j, key, s);
  if (!std::isfinite(s)) throw Error(ErrorCode::InvalidConfig, std::string("bad value for '") + key + "'");
  out = seconds_to_millis(s);
}

}  // namespace

void to_json(json& j, const PipelineConfig& c) {
  json bank = json::array();
  for (const auto& g : c.gold_bank) {
    bank.push_back({{"id", g.id}, {"label", to_string(g.label)}, {"duration_s", seconds(g.duration)}});
  }
  j = json{
      {"mode", c.mode == Mode::Service ? "service" : "simulation"},
      {"seed", c.seed},
      {"log_path", c.log_path},
      {"host", c.host},
      {"port", c.port},
      {"segmentation", {{"tau_s", seconds(c.segmentation.tau)}, {"merge_remainder", c.segmentation.merge_remainder}}},
      {"assignment",
       {{"quorum_m", c.assignment.quorum_m},
        {"cooldown_s", seconds(c.assignment.cooldown)},
        {"prefer_signed", c.assignment.prefer_signed},
        {"locale_weight", c.assignment.locale_weight},
        {"max_retries", c.assignment.max_retries},
        {"gold_injection_rate", c.assignment.gold_injection_rate}}},
      {"judgment",
       {{"window_w", c.judgment.window_w},
        {"weighting", to_string(c.judgment.weighting)},
        {"accuracy_clamp_eps", c.judgment.accuracy_clamp_eps},
        {"bias_threshold", c.judgment.bias_threshold},
        {"min_gold_for_bias", c.judgment.min_gold_for_bias},
        {"quorum_timeout_s", seconds(c.judgment.quorum_timeout)}}},
      {"gold_bank", bank},
  };
}

void from_json(const json& j, PipelineConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  if (j.contains("mode")) {
    std::string mode;
    read(j, "mode", mode);
    if (mode == "service") c.mode = Mode::Service;
    else if (mode == "simulation") c.mode = Mode::Simulation;
    else throw Error(ErrorCode::InvalidConfig, "mode must be service or simulation");
  }
  read(j, "seed", c.seed);
  read(j, "log_path", c.log_path);
  read(j, "host", c.host);
  read(j, "port", c.port);
  if (j.contains("segmentation")) {
    const auto& s = j.at("segmentation");
    read_seconds(s, "tau_s", c.segmentation.tau);
    read(s, "merge_remainder", c.segmentation.merge_remainder);
  }
  if (j.contains("assignment")) {
    const auto& a = j.at("assignment");
    read(a, "quorum_m", c.assignment.quorum_m);
    read_seconds(a, "cooldown_s", c.assignment.cooldown);
    read(a, "prefer_signed", c.assignment.prefer_signed);
    read(a, "locale_weight", c.assignment.locale_weight);
    read(a, "max_retries", c.assignment.max_retries);
    read(a, "gold_injection_rate", c.assignment.gold_injection_rate);
  }
  if (j.contains("judgment")) {
    const auto& p = j.at("judgment");
    read(p, "window_w", c.judgment.window_w);
    if (p.contains("weighting")) {
      std::string w;
      read(p, "weighting", w);
      c.judgment.weighting = parse_weighting(w);
    }
    read(p, "accuracy_clamp_eps", c.judgment.accuracy_clamp_eps);
    read(p, "bias_threshold", c.judgment.bias_threshold);
    read(p, "min_gold_for_bias", c.judgment.min_gold_for_bias);
    read_seconds(p, "quorum_timeout_s", c.judgment.quorum_timeout);
  }
  if (j.contains("gold_bank")) {
    const auto& bank = j.at("gold_bank");
    if (bank.is_number_unsigned()) {
      c.gold_bank = make_gold_bank(bank.get<std::size_t>(), c.segmentation.tau);
    } else if (bank.is_array()) {
      c.gold_bank.clear();
      for (const auto& g : bank) {
        GoldItem item;
        read(g, "id", item.id);
        std::string label = "safe";
        read(g, "label", label);
        if (label == "safe") item.label = Truth::Safe;
        else if (label == "unsafe") item.label = Truth::Unsafe;
        else throw Error(ErrorCode::InvalidConfig, "gold label must be safe or unsafe");
        item.duration = c.segmentation.tau;
        read_seconds(g, "duration_s", item.duration);
        if (item.id.empty()) item.id = "gold-" + std::to_string(c.gold_bank.size());
        c.gold_bank.push_back(std::move(item));
      }
    } else {
      throw Error(ErrorCode::InvalidConfig, "gold_bank must be an array or a count");
    }
  }
  c.validate();
}

json parse_config_text(const std::string& text) {
  try {
    return json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config parse error: ") + e.what());
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig c;
  from_json(parse_config_text(ss.str()), c);
  return c;
}

std::string config_hash(const PipelineConfig& c) {
  const std::string text = json(c).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace crowdmod
