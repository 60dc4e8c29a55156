#include "vigil/cli.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "vigil/analysis.hpp"
#include "vigil/csv_io.hpp"
#include "vigil/http_server.hpp"
#include "vigil/record.hpp"
#include "vigil/report.hpp"
#include "vigil/service.hpp"
#include "vigil/synthetic.hpp"

namespace vigil::cli {

namespace fs = std::filesystem;

namespace {

struct RawFlags {
  std::string band{"4:8"};
  std::string window{"rect"};
};

void add_flags(CLI::App* app, Flags& f, RawFlags& raw) {
  app->add_option("--epoch-seconds", f.epoch.epoch_seconds, "Epoch length in seconds (2-10)")->capture_default_str();
  app->add_option("--scaling", f.calib.scaling, "Threshold = scaling x mean baseline theta power")->capture_default_str();
  app->add_option("--baseline-epochs", f.calib.baseline_epoch_count, "Eyes-closed calibration epochs")->capture_default_str();
  app->add_option("--band", raw.band, "Band edges LO:HI in Hz (inclusive)")->capture_default_str();
  app->add_option("--window", raw.window, "Window function: rect or hann")->capture_default_str();
  app->add_option("--sample-rate", f.epoch.sample_rate_hz, "Sample rate in Hz")->capture_default_str();
}

void finish_flags(Flags& f, const RawFlags& raw) {
  const auto colon = raw.band.find(':');
  auto lo = colon == std::string::npos ? std::nullopt : detail::parse_double(std::string_view(raw.band).substr(0, colon));
  auto hi = colon == std::string::npos ? std::nullopt : detail::parse_double(std::string_view(raw.band).substr(colon + 1));
  if (!lo || !hi) throw UsageError("--band expects LO:HI, e.g. 4:8; got '" + raw.band + "'", kExitUsage);
  f.epoch.band_lo_hz = *lo;
  f.epoch.band_hi_hz = *hi;
  if (f.epoch.epoch_seconds < kMinEpochSeconds || f.epoch.epoch_seconds > kMaxEpochSeconds)
    throw UsageError("--epoch-seconds must lie in the 2-10 s range; got " + std::to_string(f.epoch.epoch_seconds),
                     kExitUsage);
  try {
    f.epoch.window_fn = parse_window(raw.window);
    validate(f.epoch);
    validate(f.calib);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("invalid flag value: ") + e.what(), kExitUsage);
  }
}

SessionMode mode_or_usage(const std::string& s) {
  try {
    return parse_mode(s);
  } catch (const ConfigError& e) {
    throw UsageError(e.what(), kExitUsage);
  }
}

std::string default_record_path(const std::string& recording) {
  fs::path p(recording);
  return (p.parent_path() / (p.stem().string() + ".session.jsonl")).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << text;
}

void write_bp_csv(const std::string& path, const SessionRecord& rec) {
  std::ostringstream os;
  os << "index,start_t,theta_bp,threshold,state,valid\n";
  for (const auto& v : rec.verdicts())
    os << v.epoch_index << ',' << detail::format_double(static_cast<double>(v.epoch_index) * rec.meta.epoch_cfg.epoch_seconds)
       << ',' << detail::format_double(v.theta_bp) << ',' << detail::format_double(v.threshold) << ','
       << (v.state ? std::string(to_string(*v.state)) : std::string()) << ',' << (v.valid ? 1 : 0) << '\n';
  write_text(path, os.str());
}

void print_summary(std::ostream& out, const SessionRecord& rec) {
  std::size_t valid = 0, vigilant = 0;
  const auto verdicts = rec.verdicts();
  for (const auto& v : verdicts) {
    valid += v.valid ? 1 : 0;
    vigilant += (v.state && *v.state == VigilanceState::Vigilant) ? 1 : 0;
  }
  out << "session: " << rec.meta.session_id << " (" << to_string(rec.meta.mode) << ")\n";
  if (const auto b = rec.baseline())
    out << "baseline: mean theta " << detail::format_double(b->mean_theta_bp) << " uV^2, threshold "
        << detail::format_double(b->threshold) << " uV^2 (scaling " << b->scaling << ")\n";
  else
    out << "baseline: not reached\n";
  out << "monitored epochs: " << verdicts.size() << " (" << valid << " valid, " << vigilant << " vigilant, "
      << (valid - vigilant) << " non-vigilant)\n";
}

void print_evaluation(std::ostream& out, const SessionRecord& rec) {
  if (rec.tags().empty()) return;
  const auto ev = evaluate_session(rec);
  const std::vector<SessionReport> reports{ev.report};
  const std::vector<ConfusionMatrix> matrices{ev.matrix};
  out << '\n' << render_report(reports, matrices);
  out << "accuracy: " << format_fraction(ev.report.accuracy) << " (" << format_percent(ev.report.accuracy) << ")\n";
}

SessionMeta offline_meta(const std::string& id, const SourceSpec& source, const Flags& flags, SessionMode mode,
                         const std::string& label) {
  SessionMeta meta;
  meta.session_id = id;
  meta.source = source;
  meta.epoch_cfg = flags.epoch;
  meta.calib_cfg = flags.calib;
  meta.mode = mode;
  meta.label = label;
  if (const auto* s = std::get_if<SyntheticSpec>(&source)) meta.seed = s->config.seed;
  return meta;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw SourceError("no such file: " + path);
}

int do_analyze(const Analyze& cmd, std::ostream& out) {
  require_file(cmd.recording);
  std::vector<EyeStatusTag> tags;
  if (!cmd.tags_path.empty()) {
    require_file(cmd.tags_path);
    tags = read_tags(cmd.tags_path);
  }
  const std::string id = cmd.session_id.empty() ? fs::path(cmd.recording).stem().string() : cmd.session_id;
  const ReplaySpec spec{cmd.recording, 0.0};
  ReplaySource src(spec);
  const SessionRecord rec = run_offline(src, offline_meta(id, spec, cmd.flags, cmd.mode, cmd.label), tags);
  const std::string out_path = cmd.out_path.empty() ? default_record_path(cmd.recording) : cmd.out_path;
  write_text(out_path, serialize(rec));
  if (!cmd.bp_csv_path.empty()) write_bp_csv(cmd.bp_csv_path, rec);
  print_summary(out, rec);
  out << "verdicts: " << out_path << '\n';
  print_evaluation(out, rec);
  return kExitOk;
}

int do_simulate(const Simulate& cmd, std::ostream& out) {
  SyntheticConfig cfg;
  if (!cmd.config_path.empty()) {
    require_file(cmd.config_path);
    std::ifstream in(cmd.config_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw SourceError(cmd.config_path + ": invalid JSON: " + e.what());
    }
    cfg = synthetic_config_from_json(j);
  } else {
    cfg = presets::by_name(cmd.preset, cmd.amplitude_uv, cmd.noise_sigma_uv, cmd.seed);
    cfg.sample_rate_hz = cmd.flags.epoch.sample_rate_hz;
  }
  if (cfg.sample_rate_hz != cmd.flags.epoch.sample_rate_hz)
    throw ConfigError("sample_rate_hz", "synthetic config rate differs from --sample-rate");

  const std::string stem = cmd.name.empty() ? (cmd.config_path.empty() ? cmd.preset : fs::path(cmd.config_path).stem().string())
                                            : cmd.name;
  fs::create_directories(cmd.out_dir);
  const auto base = fs::path(cmd.out_dir) / stem;
  const std::string rec_path = base.string() + ".csv";
  const std::string tag_path = base.string() + ".tags.csv";
  const std::string session_path = base.string() + ".session.jsonl";

  const auto samples = synthesize(cfg);
  write_recording(rec_path, samples);
  const auto tags = tags_from_segments(cfg);
  if (!tags.empty()) write_tags(tag_path, tags);

  const SessionRecord rec = run_offline(samples, offline_meta(stem, SyntheticSpec{cfg, 0.0}, cmd.flags, cmd.mode, ""), tags);
  write_text(session_path, serialize(rec));
  out << "recording: " << rec_path << " (" << samples.size() << " samples)\n";
  if (!tags.empty()) out << "tags: " << tag_path << '\n';
  print_summary(out, rec);
  out << "verdicts: " << session_path << '\n';
  print_evaluation(out, rec);
  return kExitOk;
}

int do_replay(const Replay& cmd, std::ostream& out) {
  require_file(cmd.path);
  std::vector<EyeStatusTag> tags;
  if (!cmd.tags_path.empty()) {
    require_file(cmd.tags_path);
    tags = read_tags(cmd.tags_path);
  }
  const ReplaySpec spec{cmd.path, cmd.speed};
  const SessionMeta meta = offline_meta(fs::path(cmd.path).stem().string(), spec, cmd.flags, cmd.mode, "");
  validate(meta.epoch_cfg);
  ReplaySource src(spec);
  SessionRecord rec;
  rec.meta = meta;
  Pipeline pipeline(meta.epoch_cfg, meta.calib_cfg);
  auto emit = [&](const SessionEvent& ev) {
    out << to_json(ev).dump() << '\n' << std::flush;
    rec.events.push_back(ev);
  };
  for (const auto& ev : pipeline.start()) emit(ev);
  std::size_t next_tag = 0;
  while (auto s = src.next()) {
    while (next_tag < tags.size() && tags[next_tag].t <= s->t) emit(TagEvent{tags[next_tag++]});
    for (const auto& ev : pipeline.push(*s)) emit(ev);
  }
  while (next_tag < tags.size()) emit(TagEvent{tags[next_tag++]});
  emit(EndedEvent{end_reason::kSourceExhausted, 0});
  if (!cmd.out_path.empty()) write_text(cmd.out_path, serialize(rec));
  return kExitOk;
}

int do_aggregate(const std::vector<std::string>& files, const std::string& csv_path, bool with_matrices,
                 std::ostream& out) {
  if (files.empty()) throw SourceError("no session files given");
  std::vector<SessionReport> reports;
  std::map<SessionMode, std::vector<LabeledEpoch>> pooled;
  std::map<SessionMode, std::vector<std::pair<std::string, double>>> by_mode;
  for (const auto& f : files) {
    require_file(f);
    const auto rec = load_session(f);
    const auto ev = evaluate_session(rec);
    reports.push_back(ev.report);
    auto& pool = pooled[rec.meta.mode];
    pool.insert(pool.end(), ev.labeled.begin(), ev.labeled.end());
    by_mode[rec.meta.mode].push_back({rec.meta.label, ev.report.accuracy});
  }

  std::vector<ConfusionMatrix> matrices;
  if (with_matrices)
    for (const auto& [mode, labeled] : pooled) matrices.push_back(confusion(labeled, std::string(to_string(mode)) + " (pooled epochs)"));
  out << render_report(reports, matrices);

  const auto& ins = by_mode[SessionMode::Instructed];
  const auto& nat = by_mode[SessionMode::Natural];
  if (!ins.empty() && ins.size() == nat.size() && ins.size() >= 2) {
    // pair by label when every session carries one, else by input order
    std::vector<PairedRow> rows;
    bool labelled = true;
    for (const auto& v : {ins, nat})
      for (const auto& [label, acc] : v) labelled = labelled && !label.empty();
    if (labelled) {
      std::map<std::string, double> nat_by_label(nat.begin(), nat.end());
      for (const auto& [label, acc] : ins) {
        auto it = nat_by_label.find(label);
        if (it == nat_by_label.end()) {
          labelled = false;
          break;
        }
        rows.push_back({label, acc, it->second});
      }
      if (rows.size() != ins.size()) labelled = false;
    }
    if (!labelled) {
      rows.clear();
      for (std::size_t i = 0; i < ins.size(); ++i)
        rows.push_back({ins[i].first.empty() ? "pair " + std::to_string(i + 1) : ins[i].first, ins[i].second, nat[i].second});
    }
    out << '\n' << render_paired_table(rows);
    std::vector<double> a, b;
    for (const auto& r : rows) {
      a.push_back(r.instructed);
      b.push_back(r.natural);
    }
    try {
      const auto tt = paired_t_test(a, b);
      out << "paired t-test (natural - instructed): t=" << format_fraction(tt.t_statistic) << ", df=" << tt.df << '\n';
      out << "paired t-test: p=" << format_fraction(tt.p_two_tailed) << '\n';
    } catch (const DegenerateError& e) {
      out << "paired t-test: p=n/a (" << e.what() << ")\n";
    }
  }
  if (!csv_path.empty()) write_text(csv_path, reports_csv(reports));
  return kExitOk;
}

int do_serve(const Serve& cmd, std::ostream& out) {
  ServiceConfig cfg;
  cfg.data_dir = cmd.data_dir.empty() ? ServiceConfig::default_data_dir() : cmd.data_dir;
  cfg.max_live_sessions = cmd.max_sessions;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Service service(cfg);
  HttpServer server(service, cmd.bind_addr);
  out << "vigil: serving on port " << server.port() << ", data in " << cfg.data_dir << '\n' << std::flush;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  service.shutdown();
  return kExitOk;
}

}  // namespace

Command parse_cli(int argc, const char* const* argv) {
  CLI::App app{"Real-time vigilance detection from single-channel frontal EEG", "vigil"};
  app.require_subcommand(1);

  Serve serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the session service (HTTP control + WebSocket live stream)");
  serve_cmd->add_option("--bind", serve.bind_addr, "host:port to listen on")->capture_default_str();
  serve_cmd->add_option("--data-dir", serve.data_dir, "Session record directory (default $VIGIL_DATA_DIR or ./data)");
  serve_cmd->add_option("--max-sessions", serve.max_sessions, "Concurrent live session cap")->capture_default_str();

  Replay replay;
  RawFlags replay_raw;
  std::string replay_mode{"instructed"};
  auto* replay_cmd = app.add_subcommand("replay", "Replay a recording through the pipeline, printing live events");
  replay_cmd->add_option("recording", replay.path, "Recording CSV (t,uv)")->required();
  replay_cmd->add_option("--speed", replay.speed, "Playback speed, 0 = unpaced")->capture_default_str()->check(CLI::NonNegativeNumber);
  replay_cmd->add_option("--tags", replay.tags_path, "Eye-status tag CSV (t,status)");
  replay_cmd->add_option("--out", replay.out_path, "Write the session record here");
  replay_cmd->add_option("--mode", replay_mode, "instructed or natural")->capture_default_str();
  add_flags(replay_cmd, replay.flags, replay_raw);

  Simulate sim;
  RawFlags sim_raw;
  std::string sim_mode{"instructed"};
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic recording and analyse it");
  sim_cmd->add_option("--preset", sim.preset, "session, closed or open")->capture_default_str();
  sim_cmd->add_option("--config", sim.config_path, "Synthetic config JSON (overrides --preset)");
  sim_cmd->add_option("--seed", sim.seed, "Noise seed")->capture_default_str();
  sim_cmd->add_option("--amplitude", sim.amplitude_uv, "Closed-eye theta amplitude a in uV")->capture_default_str();
  sim_cmd->add_option("--noise", sim.noise_sigma_uv, "Gaussian noise sigma in uV")->capture_default_str()->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--out-dir", sim.out_dir, "Output directory")->capture_default_str();
  sim_cmd->add_option("--name", sim.name, "Output file stem");
  sim_cmd->add_option("--mode", sim_mode, "instructed or natural")->capture_default_str();
  add_flags(sim_cmd, sim.flags, sim_raw);

  Analyze an;
  RawFlags an_raw;
  std::string an_mode{"instructed"};
  auto* an_cmd = app.add_subcommand("analyze", "Offline analysis of a recording");
  an_cmd->add_option("recording", an.recording, "Recording CSV (t,uv)")->required();
  an_cmd->add_option("--tags", an.tags_path, "Eye-status tag CSV (t,status)");
  an_cmd->add_option("--out", an.out_path, "Verdicts / session record output (default <recording>.session.jsonl)");
  an_cmd->add_option("--bp-csv", an.bp_csv_path, "Export per-epoch theta power as CSV");
  an_cmd->add_option("--session-id", an.session_id, "Session id written into the record");
  an_cmd->add_option("--label", an.label, "Pairing label, e.g. P1-Morning");
  an_cmd->add_option("--mode", an_mode, "instructed or natural")->capture_default_str();
  add_flags(an_cmd, an.flags, an_raw);

  Evaluate ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Accuracy table over session records, with paired t-test");
  ev_cmd->add_option("files", ev.files, "Session record files (.jsonl)");
  ev_cmd->add_option("--csv", ev.csv_path, "Export per-session CSV");

  Report rep;
  auto* rep_cmd = app.add_subcommand("report", "Evaluate plus pooled confusion matrices per mode");
  rep_cmd->add_option("files", rep.files, "Session record files (.jsonl)");
  rep_cmd->add_option("--csv", rep.csv_path, "Export per-session CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw UsageError(app.help(), kExitOk);
  } catch (const CLI::CallForAllHelp&) {
    throw UsageError(app.help("", CLI::AppFormatMode::All), kExitOk);
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\n" + app.help(), kExitUsage);
  }

  if (*serve_cmd) return serve;
  if (*replay_cmd) {
    finish_flags(replay.flags, replay_raw);
    replay.mode = mode_or_usage(replay_mode);
    return replay;
  }
  if (*sim_cmd) {
    finish_flags(sim.flags, sim_raw);
    sim.mode = mode_or_usage(sim_mode);
    return sim;
  }
  if (*an_cmd) {
    finish_flags(an.flags, an_raw);
    an.mode = mode_or_usage(an_mode);
    return an;
  }
  if (*ev_cmd) return ev;
  return rep;
}

int execute(const Command& cmd, std::ostream& out, std::ostream& err) {
  try {
    return std::visit(
        [&](const auto& c) -> int {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Serve>) return do_serve(c, out);
          if constexpr (std::is_same_v<T, Replay>) return do_replay(c, out);
          if constexpr (std::is_same_v<T, Simulate>) return do_simulate(c, out);
          if constexpr (std::is_same_v<T, Analyze>) return do_analyze(c, out);
          if constexpr (std::is_same_v<T, Evaluate>) return do_aggregate(c.files, c.csv_path, false, out);
          if constexpr (std::is_same_v<T, Report>) return do_aggregate(c.files, c.csv_path, true, out);
          return kExitRuntime;
        },
        cmd);
  } catch (const std::exception& e) {
    err << "vigil: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    cmd = parse_cli(argc, argv);
  } catch (const UsageError& e) {
    (e.exit_code() == kExitOk ? out : err) << e.what() << '\n';
    return e.exit_code();
  }
  return execute(cmd, out, err);
}

}  // namespace vigil::cli
