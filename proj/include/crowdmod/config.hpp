#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crowdmod/assigner.hpp"
#include "crowdmod/judgment.hpp"
#include "crowdmod/segmenter.hpp"
#include "json.hpp"

namespace crowdmod {

enum class Mode { Service, Simulation };

/// Builds a bank of `n` gold items alternating safe/unsafe labels.
std::vector<GoldItem> make_gold_bank(std::size_t n, Millis duration);

struct PipelineConfig {
  SegmentationPolicy segmentation;
  AssignmentPolicy assignment;
  JudgmentPolicy judgment;
  std::vector<GoldItem> gold_bank = make_gold_bank(20, SegmentationPolicy{}.tau);
  std::string log_path;
  Mode mode = Mode::Simulation;
  std::uint64_t seed = 0;
  std::string host = "127.0.0.1";
  int port = 8080;

  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
/// Missing keys keep their defaults. Throws InvalidConfig on bad values.
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// Parses JSON with // and /* */ comments allowed.
nlohmann::json parse_config_text(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& c);

}  // namespace crowdmod
