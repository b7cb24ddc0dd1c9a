// crowdmod: simulate, serve, replay and report.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.

#include <pthread.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "crowdmod/engine.hpp"
#include "crowdmod/event_log.hpp"
#include "crowdmod/metrics.hpp"
#include "crowdmod/service.hpp"
#include "crowdmod/sim.hpp"

namespace fs = std::filesystem;
using namespace crowdmod;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidConfig:
      return kUsage;
    default:
      return kRuntime;
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct SimulateArgs {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool csv_only = false;
};

int cmd_simulate(const SimulateArgs& a) {
  sim::Scenario scenario;
  if (!a.config.empty()) {
    scenario = sim::scenario_from_json(parse_config_text(read_text(a.config)));
  } else {
    scenario = sim::preset(a.preset.empty() ? "desk" : a.preset);
  }
  const std::uint64_t seed = a.seed.value_or(scenario.config.seed);
  const sim::SimResult r = sim::run_simulation(scenario, seed);

  const fs::path out = a.out;
  fs::create_directories(out);
  sim::write_log(r.header, r.events, out / "events.log");
  write_csv(r.metrics, out);
  if (!a.csv_only) {
    write_json(out / "summary.json", r.summary);
    write_json(out / "report.json", sim::report_json(r));
  }
  std::cerr << "simulated " << r.videos_generated << " videos, " << r.events.size() << " events -> "
            << out.string() << '\n';
  return kOk;
}

LogContents load_log(const fs::path& path) {
  LogContents log = read_log_file(path);
  if (log.truncated) std::cerr << "warning: " << path.string() << " ends in a truncated record; ignored\n";
  return log;
}

int cmd_replay(const std::string& path) {
  const LogContents log = load_log(path);
  Engine engine(log);
  std::cout << summarize(engine.snapshot()).dump(2) << '\n';
  return kOk;
}

int cmd_report(const std::string& path, const std::string& out, bool csv_only) {
  const LogContents log = load_log(path);
  Engine engine(log);
  const MetricsReport m = compute_metrics(engine.snapshot(), log.events, engine.config().judgment);
  if (out.empty()) {
    std::cout << to_json(m).dump(2) << '\n';
    return kOk;
  }
  write_csv(m, out);
  if (!csv_only) write_json(fs::path(out) / "report.json", to_json(m));
  return kOk;
}

struct ServeArgs {
  std::string config;
  std::optional<int> port;
  std::string host;
  std::string log;
};

int cmd_serve(const ServeArgs& a) {
  PipelineConfig config;
  config.mode = Mode::Service;
  if (!a.config.empty()) config = load_config(a.config);
  if (config.mode != Mode::Service) throw Error(ErrorCode::InvalidConfig, "serve requires mode \"service\"");
  if (a.port) config.port = *a.port;
  if (!a.host.empty()) config.host = a.host;
  if (!a.log.empty()) config.log_path = a.log;
  if (config.log_path.empty()) config.log_path = "events.log";
  config.validate();

  // Signals are taken synchronously on a dedicated thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const fs::path log_path = config.log_path;
  std::unique_ptr<EventLogWriter> writer;
  std::unique_ptr<Engine> engine;
  if (fs::exists(log_path) && fs::file_size(log_path) > 0) {
    const LogContents log = load_log(log_path);
    if (log.truncated) throw Error(ErrorCode::Malformed, "refusing to append to a truncated log");
    writer = std::make_unique<EventLogWriter>(log_path, EventLogWriter::OpenMode::Append);
    engine = std::make_unique<Engine>(log, writer.get());
    std::cerr << "resumed " << log.events.size() << " events from " << log_path.string() << '\n';
  } else {
    writer = std::make_unique<EventLogWriter>(log_path);
    engine = std::make_unique<Engine>(config, writer.get());
  }

  Service service(*engine, Service::wall_clock);
  if (!service.bind(config.host, config.port)) {
    std::cerr << "error: cannot bind " << config.host << ':' << config.port << '\n';
    return kRuntime;
  }
  std::cerr << "listening on " << config.host << ':' << service.port() << '\n';

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    (void)sig;
    service.stop();
  });
  service.run();
  // Wake the waiter if the server stopped on its own.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  writer->flush();
  std::cerr << "stopped; " << engine->last_seq() << " events in " << log_path.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowdsourced video moderation pipeline"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run the crowd simulator and write logs and reports");
  simulate->add_option("--config", sim_args.config, "Scenario file (JSON, comments allowed)");
  simulate->add_option("--preset", sim_args.preset, "Built-in scenario: desk, survey, youtube-scale");
  simulate->add_option("--seed", sim_args.seed, "RNG seed (overrides the config)");
  simulate->add_option("--out", sim_args.out, "Output directory")->capture_default_str();
  simulate->add_flag("--csv-only", sim_args.csv_only, "Write only the log and CSV files");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the HTTP worker service");
  serve->add_option("--config", serve_args.config, "Pipeline config (JSON, comments allowed)");
  serve->add_option("--port", serve_args.port, "Listen port (0 picks a free port)");
  serve->add_option("--host", serve_args.host, "Listen address");
  serve->add_option("--log", serve_args.log, "Event log path");

  std::string replay_log;
  auto* replay = app.add_subcommand("replay", "Rebuild state from an event log and print a summary");
  replay->add_option("log", replay_log, "Event log")->required();

  std::string report_log, report_out;
  bool report_csv_only = false;
  auto* report = app.add_subcommand("report", "Recompute metrics from an event log");
  report->add_option("log", report_log, "Event log")->required();
  report->add_option("--out", report_out, "Output directory (stdout JSON when omitted)");
  report->add_flag("--csv-only", report_csv_only, "Write only CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim_args);
    if (*serve) return cmd_serve(serve_args);
    if (*replay) return cmd_replay(replay_log);
    if (*report) return cmd_report(report_log, report_out, report_csv_only);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
