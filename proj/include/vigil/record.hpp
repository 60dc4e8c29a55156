#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vigil/errors.hpp"
#include "vigil/evaluation.hpp"
#include "vigil/pipeline.hpp"
#include "vigil/source.hpp"

namespace vigil {

using json = nlohmann::ordered_json;

struct SessionMeta {
  std::string session_id;
  std::string created_at;  // wall clock, ISO-8601; empty for offline runs
  SourceSpec source{SyntheticSpec{}};
  EpochConfig epoch_cfg;
  CalibrationConfig calib_cfg;
  SessionMode mode{SessionMode::Instructed};
  std::optional<std::uint64_t> seed;
  std::string label;  // optional pairing key, e.g. "P1-Morning"
  bool record_raw{false};
};

// ---- JSON reading helpers: type mismatches become ConfigError(field) ----

namespace detail {

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& field) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "wrong type");
  }
}

template <typename T>
T field_required(const json& j, const char* key, const std::string& field) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(field, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "wrong type");
  }
}

}  // namespace detail

inline json to_json(const EpochConfig& c) {
  return json{{"sample_rate_hz", c.sample_rate_hz},
              {"epoch_seconds", c.epoch_seconds},
              {"window", std::string(to_string(c.window_fn))},
              {"band_lo_hz", c.band_lo_hz},
              {"band_hi_hz", c.band_hi_hz}};
}

inline EpochConfig epoch_config_from_json(const json& j) {
  EpochConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("epoch_cfg", "must be an object");
  c.sample_rate_hz = detail::field_or(j, "sample_rate_hz", c.sample_rate_hz, "sample_rate_hz");
  c.epoch_seconds = detail::field_or(j, "epoch_seconds", c.epoch_seconds, "epoch_seconds");
  c.window_fn = parse_window(detail::field_or<std::string>(j, "window", "rect", "window"));
  c.band_lo_hz = detail::field_or(j, "band_lo_hz", c.band_lo_hz, "band");
  c.band_hi_hz = detail::field_or(j, "band_hi_hz", c.band_hi_hz, "band");
  return c;
}

inline json to_json(const CalibrationConfig& c) {
  return json{{"baseline_epoch_count", c.baseline_epoch_count}, {"scaling", c.scaling}};
}

inline CalibrationConfig calib_config_from_json(const json& j) {
  CalibrationConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError("calib_cfg", "must be an object");
  c.baseline_epoch_count = detail::field_or(j, "baseline_epoch_count", c.baseline_epoch_count, "baseline_epoch_count");
  c.scaling = detail::field_or(j, "scaling", c.scaling, "scaling");
  return c;
}

inline json to_json(const SyntheticConfig& c) {
  json segs = json::array();
  for (const auto& s : c.segments) {
    json comps = json::array();
    for (const auto& k : s.components)
      comps.push_back({{"freq_hz", k.freq_hz}, {"amplitude_uv", k.amplitude_uv}, {"phase_rad", k.phase_rad}});
    json seg{{"duration_s", s.duration_s}, {"components", comps}, {"noise_sigma_uv", s.noise_sigma_uv}};
    if (s.eyes) seg["eyes"] = std::string(to_string(*s.eyes));
    segs.push_back(std::move(seg));
  }
  return json{{"sample_rate_hz", c.sample_rate_hz}, {"seed", c.seed}, {"segments", segs}};
}

// Accepts either a full config or {"preset": name, "amplitude_uv", "noise_sigma_uv", "seed"}.
inline SyntheticConfig synthetic_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("synthetic", "must be an object");
  if (j.contains("preset")) {
    auto cfg = presets::by_name(detail::field_required<std::string>(j, "preset", "preset"),
                                detail::field_or(j, "amplitude_uv", presets::kDefaultAmplitude, "amplitude_uv"),
                                detail::field_or(j, "noise_sigma_uv", presets::kDefaultSigma, "noise_sigma_uv"),
                                detail::field_or<std::uint64_t>(j, "seed", 1, "seed"));
    cfg.sample_rate_hz = detail::field_or(j, "sample_rate_hz", cfg.sample_rate_hz, "sample_rate_hz");
    return cfg;
  }
  SyntheticConfig c;
  c.sample_rate_hz = detail::field_or(j, "sample_rate_hz", c.sample_rate_hz, "sample_rate_hz");
  c.seed = detail::field_or<std::uint64_t>(j, "seed", 0, "seed");
  const json segs = detail::field_required<json>(j, "segments", "segments");
  if (!segs.is_array()) throw ConfigError("segments", "must be an array");
  for (const auto& s : segs) {
    Segment seg;
    seg.duration_s = detail::field_required<double>(s, "duration_s", "segments.duration_s");
    seg.noise_sigma_uv = detail::field_or(s, "noise_sigma_uv", 0.0, "segments.noise_sigma_uv");
    if (s.contains("eyes")) seg.eyes = parse_eye_status(detail::field_required<std::string>(s, "eyes", "segments.eyes"));
    for (const auto& k : detail::field_or(s, "components", json::array(), "segments.components")) {
      SineComponent comp;
      comp.freq_hz = detail::field_required<double>(k, "freq_hz", "segments.components.freq_hz");
      comp.amplitude_uv = detail::field_required<double>(k, "amplitude_uv", "segments.components.amplitude_uv");
      comp.phase_rad = detail::field_or(k, "phase_rad", 0.0, "segments.components.phase_rad");
      seg.components.push_back(comp);
    }
    c.segments.push_back(std::move(seg));
  }
  return c;
}

inline json to_json(const SourceSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ReplaySpec>) {
          return json{{"type", "replay"}, {"path", s.path}, {"speed", s.speed}};
        } else if constexpr (std::is_same_v<T, SyntheticSpec>) {
          return json{{"type", "synthetic"}, {"speed", s.speed}, {"config", to_json(s.config)}};
        } else {
          return json{{"type", "network"}, {"listen", s.listen_address}};
        }
      },
      spec);
}

inline SourceSpec source_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("source", "must be an object");
  const auto type = detail::field_required<std::string>(j, "type", "source.type");
  if (type == "replay")
    return ReplaySpec{detail::field_required<std::string>(j, "path", "source.path"),
                      detail::field_or(j, "speed", 0.0, "source.speed")};
  if (type == "synthetic") {
    SyntheticSpec s;
    s.speed = detail::field_or(j, "speed", 0.0, "source.speed");
    s.config = synthetic_config_from_json(j.contains("config") ? j.at("config") : j);
    return s;
  }
  if (type == "network") return NetworkSpec{detail::field_or<std::string>(j, "listen", "127.0.0.1:0", "source.listen")};
  throw ConfigError("source.type", "expected replay, synthetic or network, got '" + type + "'");
}

inline json to_json(const SessionMeta& m) {
  json j{{"type", "meta"},
         {"session_id", m.session_id},
         {"created_at", m.created_at},
         {"source", to_json(m.source)},
         {"epoch_cfg", to_json(m.epoch_cfg)},
         {"calib_cfg", to_json(m.calib_cfg)},
         {"mode", std::string(to_string(m.mode))},
         {"seed", m.seed ? json(*m.seed) : json(nullptr)},
         {"label", m.label},
         {"record_raw", m.record_raw}};
  return j;
}

inline SessionMeta meta_from_json(const json& j) {
  SessionMeta m;
  m.session_id = detail::field_required<std::string>(j, "session_id", "session_id");
  m.created_at = detail::field_or<std::string>(j, "created_at", "", "created_at");
  m.source = source_from_json(detail::field_required<json>(j, "source", "source"));
  m.epoch_cfg = epoch_config_from_json(detail::field_or(j, "epoch_cfg", json(nullptr), "epoch_cfg"));
  m.calib_cfg = calib_config_from_json(detail::field_or(j, "calib_cfg", json(nullptr), "calib_cfg"));
  m.mode = parse_mode(detail::field_or<std::string>(j, "mode", "instructed", "mode"));
  if (j.contains("seed") && !j.at("seed").is_null()) m.seed = detail::field_required<std::uint64_t>(j, "seed", "seed");
  m.label = detail::field_or<std::string>(j, "label", "", "label");
  m.record_raw = detail::field_or(j, "record_raw", false, "record_raw");
  return m;
}

inline json phase_json(const SessionPhase& p) {
  json j{{"type", "phase"}, {"phase", std::string(to_string(p.kind))}};
  if (p.kind == SessionPhase::Kind::Calibrating) j["completed"] = p.completed;
  return j;
}

// Wire shape shared by the record file and the live stream.
inline json to_json(const SessionEvent& ev) {
  return std::visit(
      [](const auto& e) -> json {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, PhaseEvent>) {
          return phase_json(e.phase);
        } else if constexpr (std::is_same_v<T, EpochEvent>) {
          const auto& v = e.verdict;
          return json{{"type", "epoch"},
                      {"index", v.epoch_index},
                      {"theta_bp", v.theta_bp},
                      {"threshold", v.threshold},
                      {"state", v.state ? json(std::string(to_string(*v.state))) : json(nullptr)},
                      {"valid", v.valid}};
        } else if constexpr (std::is_same_v<T, TagEvent>) {
          return json{{"type", "tag"}, {"t", e.tag.t}, {"status", std::string(to_string(e.tag.status))}};
        } else if constexpr (std::is_same_v<T, BaselineEvent>) {
          json j{{"type", "baseline"},
                 {"mean_theta_bp", e.profile.mean_theta_bp},
                 {"scaling", e.profile.scaling},
                 {"threshold", e.profile.threshold}};
          if (e.zero_warning) j["warning"] = "zero baseline: threshold is 0";
          return j;
        } else {
          return json{{"type", "ended"}, {"reason", e.reason}, {"skip_count", e.skip_count}};
        }
      },
      ev);
}

class RecordError : public std::runtime_error {
 public:
  RecordError(std::size_t record, const std::string& what)
      : std::runtime_error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

inline SessionPhase phase_from_json(const json& j) {
  const auto name = j.at("phase").get<std::string>();
  if (name == "calibrating") return SessionPhase::calibrating(j.value("completed", 0));
  if (name == "monitoring") return SessionPhase::monitoring();
  if (name == "idle") return SessionPhase::idle();
  throw std::invalid_argument("unknown phase '" + name + "'");
}

inline SessionEvent event_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "phase") return PhaseEvent{phase_from_json(j)};
  if (type == "epoch") {
    EpochVerdict v;
    v.epoch_index = j.at("index").get<std::size_t>();
    v.theta_bp = j.at("theta_bp").get<double>();
    v.threshold = j.at("threshold").get<double>();
    v.valid = j.at("valid").get<bool>();
    const auto& st = j.at("state");
    if (!st.is_null()) {
      const auto s = st.get<std::string>();
      if (s == "vigilant")
        v.state = VigilanceState::Vigilant;
      else if (s == "nonvigilant")
        v.state = VigilanceState::NonVigilant;
      else
        throw std::invalid_argument("unknown state '" + s + "'");
    }
    return EpochEvent{v};
  }
  if (type == "tag") return TagEvent{{j.at("t").get<double>(), parse_eye_status(j.at("status").get<std::string>())}};
  if (type == "baseline")
    return BaselineEvent{{j.at("mean_theta_bp").get<double>(), j.at("scaling").get<double>(), j.at("threshold").get<double>()},
                         j.contains("warning")};
  if (type == "ended") return EndedEvent{j.at("reason").get<std::string>(), j.value("skip_count", std::size_t{0})};
  throw std::invalid_argument("unknown record type '" + type + "'");
}

// Append-only newline-delimited record file: meta first, then one event per
// line. Each line is flushed as written.
class SessionRecordWriter {
 public:
  SessionRecordWriter(const std::string& path, const SessionMeta& meta) : os_(path, std::ios::binary | std::ios::trunc) {
    if (!os_) throw std::runtime_error("cannot create session record '" + path + "'");
    write_line(to_json(meta));
  }

  void write(const SessionEvent& ev) { write_line(to_json(ev)); }

  void seal() {
    if (os_.is_open()) os_.close();
  }

 private:
  void write_line(const json& j) {
    os_ << j.dump() << '\n';
    os_.flush();
  }
  std::ofstream os_;
};

struct SessionRecord {
  SessionMeta meta;
  std::vector<SessionEvent> events;

  std::vector<EpochVerdict> verdicts() const {
    std::vector<EpochVerdict> out;
    for (const auto& e : events)
      if (const auto* ep = std::get_if<EpochEvent>(&e)) out.push_back(ep->verdict);
    return out;
  }
  std::vector<EyeStatusTag> tags() const {
    std::vector<EyeStatusTag> out;
    for (const auto& e : events)
      if (const auto* t = std::get_if<TagEvent>(&e)) out.push_back(t->tag);
    return out;
  }
  std::optional<BaselineProfile> baseline() const {
    for (const auto& e : events)
      if (const auto* b = std::get_if<BaselineEvent>(&e)) return b->profile;
    return std::nullopt;
  }
  bool ended() const { return !events.empty() && std::holds_alternative<EndedEvent>(events.back()); }
};

inline std::string serialize(const SessionRecord& rec) {
  std::string out = to_json(rec.meta).dump() + "\n";
  for (const auto& e : rec.events) out += to_json(e).dump() + "\n";
  return out;
}

inline SessionRecord parse_session_record(std::istream& in) {
  SessionRecord rec;
  std::string line;
  std::size_t n = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) throw RecordError(n, "empty line");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw RecordError(n, std::string("truncated or malformed record: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type")) throw RecordError(n, "record without type");
    try {
      if (!have_meta) {
        if (j.at("type") != "meta") throw RecordError(n, "first record must be meta");
        rec.meta = meta_from_json(j);
        have_meta = true;
      } else {
        if (j.at("type") == "meta") throw RecordError(n, "duplicate meta record");
        rec.events.push_back(event_from_json(j));
      }
    } catch (const RecordError&) {
      throw;
    } catch (const std::exception& e) {
      throw RecordError(n, e.what());
    }
  }
  if (!have_meta) throw RecordError(1, "missing meta record");
  return rec;
}

inline SessionRecord load_session(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SourceError("cannot open session record '" + path + "'");
  return parse_session_record(in);
}

struct SessionEvaluation {
  SessionReport report;
  ConfusionMatrix matrix;
  std::vector<LabeledEpoch> labeled;
};

inline SessionEvaluation evaluate_session(const SessionRecord& rec) {
  const auto tags = rec.tags();
  if (tags.empty()) throw PreconditionError("session '" + rec.meta.session_id + "' has no eye-status tags");
  const auto verdicts = rec.verdicts();
  auto labeled = label_epochs(tags, verdicts, rec.meta.epoch_cfg);
  if (labeled.empty()) throw PreconditionError("session '" + rec.meta.session_id + "' has no labeled monitored epochs");
  SessionEvaluation ev;
  ev.report = make_report(rec.meta.session_id, rec.meta.mode, labeled);
  ev.matrix = confusion(labeled, rec.meta.session_id);
  ev.labeled = std::move(labeled);
  return ev;
}

}  // namespace vigil
