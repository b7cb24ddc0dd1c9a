// Line-delimited JSON event log: one header line, then one EventRecord per line.

#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crowdmod/config.hpp"
#include "crowdmod/model.hpp"
#include "json.hpp"

namespace crowdmod {

inline constexpr int kLogSchemaVersion = 1;

struct LogHeader {
  int schema = kLogSchemaVersion;
  std::string config_hash;
  std::uint64_t seed = 0;
  PipelineConfig config;
};

nlohmann::json event_to_json(const EventRecord& e);
/// Throws Malformed on unknown kinds or missing fields.
EventRecord event_from_json(const nlohmann::json& j);

std::string format_event(const EventRecord& e);
std::string format_header(const LogHeader& h);

struct LogContents {
  std::optional<LogHeader> header;
  std::vector<EventRecord> events;
  /// Set when the final line was cut short; events hold the intact prefix.
  bool truncated = false;
};

/// Reads a whole log. An empty stream yields empty contents. Throws SeqGap at
/// the first non-contiguous seq and Malformed on any unparsable line other
/// than an unterminated final line.
LogContents read_log(std::istream& in);
LogContents read_log_file(const std::filesystem::path& path);

/// Appends records to a file, flushing after every line.
class EventLogWriter {
 public:
  enum class OpenMode { Truncate, Append };

  explicit EventLogWriter(const std::filesystem::path& path, OpenMode mode = OpenMode::Truncate);

  void write_header(const LogHeader& header);
  void append(const EventRecord& e);
  void flush();

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace crowdmod
