#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"
#include "vigil/analysis.hpp"
#include "vigil/record.hpp"
#include "vigil/synthetic.hpp"

using namespace vigil;
using namespace vigil::test;

namespace {

SessionMeta meta_for(const SyntheticConfig& cfg, std::string id = "s1") {
  SessionMeta m;
  m.session_id = std::move(id);
  m.source = SyntheticSpec{cfg, 0.0};
  m.seed = cfg.seed;
  m.mode = SessionMode::Natural;
  return m;
}

template <class T>
std::vector<T> only(const std::vector<SessionEvent>& events) {
  std::vector<T> out;
  for (const auto& e : events)
    if (const auto* p = std::get_if<T>(&e)) out.push_back(*p);
  return out;
}

double session_accuracy(double a, double sigma, std::uint64_t seed) {
  const auto cfg = presets::vigilance_session(a, sigma, seed);
  const auto tags = tags_from_segments(cfg);
  const auto rec = run_offline(synthesize(cfg), meta_for(cfg), tags);
  return evaluate_session(rec).report.accuracy;
}

}  // namespace

TEST(PipelineTest, EventSequenceForCleanSession) {
  const auto cfg = presets::vigilance_session(4.0, 0.0, 1);
  Pipeline p(EpochConfig{}, CalibrationConfig{});
  std::vector<SessionEvent> events = p.start();
  for (const auto& s : synthesize(cfg))
    for (auto& e : p.push(s)) events.push_back(e);

  // phase(cal 0), phase(cal 1..5), baseline, phase(monitoring), 30 epochs
  ASSERT_GE(events.size(), 8u);
  EXPECT_EQ(std::get<PhaseEvent>(events[0]).phase, SessionPhase::calibrating(0));
  for (int k = 1; k <= 5; ++k) EXPECT_EQ(std::get<PhaseEvent>(events[k]).phase, SessionPhase::calibrating(k));
  const auto& base = std::get<BaselineEvent>(events[6]);
  EXPECT_NEAR(base.profile.mean_theta_bp, 8.0, 1e-6);  // (4 uV)^2 / 2
  EXPECT_NEAR(base.profile.threshold, 8.8, 1e-6);
  EXPECT_FALSE(base.zero_warning);
  EXPECT_EQ(std::get<PhaseEvent>(events[7]).phase, SessionPhase::monitoring());
  const auto epochs = only<EpochEvent>(events);
  ASSERT_EQ(epochs.size(), 30u);
  EXPECT_EQ(epochs.front().verdict.epoch_index, 6u);
  EXPECT_EQ(epochs.back().verdict.epoch_index, 35u);
  EXPECT_EQ(p.verdict_count(), 30u);
  EXPECT_DOUBLE_EQ(p.sample_clock(), (180.0 * 256 - 1) / 256.0);
}

TEST(PipelineTest, ZeroBaselineWarns) {
  SyntheticConfig cfg{256, 0, {Segment{40.0, {}, 0.0, EyeStatus::Closed}}};
  const auto rec = run_offline(synthesize(cfg), meta_for(cfg));
  const auto b = only<BaselineEvent>(rec.events);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_TRUE(b[0].zero_warning);
  EXPECT_EQ(b[0].profile.threshold, 0.0);
}

TEST(EndToEnd, NoiselessSessionIsPerfect) { EXPECT_EQ(session_accuracy(4.0, 0.0, 1), 1.0); }

TEST(EndToEnd, QuarterAmplitudeNoiseStaysAccurate) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) EXPECT_GE(session_accuracy(4.0, 1.0, seed), 0.95) << seed;
}

TEST(EndToEnd, GapDuringMonitoringYieldsFlaggedVerdict) {
  const auto cfg = presets::vigilance_session(4.0, 0.0, 1);
  auto samples = synthesize(cfg);
  // remove 100 ms inside epoch 10 (50..55 s)
  samples.erase(samples.begin() + 52 * 256, samples.begin() + 52 * 256 + 26);
  const auto rec = run_offline(samples, meta_for(cfg));
  const auto v = rec.verdicts();
  ASSERT_EQ(v.size(), 30u);
  EXPECT_FALSE(v[4].valid);
  EXPECT_FALSE(v[4].state);
  EXPECT_EQ(v[4].epoch_index, 10u);
}

TEST(EndToEnd, GapDuringCalibrationDelaysBaseline) {
  const auto cfg = presets::vigilance_session(4.0, 0.0, 1);
  auto samples = synthesize(cfg);
  samples.erase(samples.begin() + 12 * 256, samples.begin() + 12 * 256 + 26);  // epoch 2
  const auto rec = run_offline(samples, meta_for(cfg));
  const auto v = rec.verdicts();
  // epochs 0..2 lost to the restart; baseline from 3..8; verdicts from 9
  ASSERT_EQ(v.size(), 27u);
  EXPECT_EQ(v.front().epoch_index, 9u);
}

// ---------------------------------------------------------------- record

TEST(SessionRecordTest, RoundTripIsBitExact) {
  const auto cfg = presets::vigilance_session(4.0, 1.0, 9);
  auto meta = meta_for(cfg, "round-trip");
  meta.label = "P1-Morning";
  meta.created_at = "2026-01-01T00:00:00Z";
  const auto rec = run_offline(synthesize(cfg), meta, tags_from_segments(cfg));
  const auto text = serialize(rec);
  std::istringstream in(text);
  const auto back = parse_session_record(in);
  EXPECT_EQ(back.events, rec.events);
  EXPECT_EQ(back.meta.session_id, "round-trip");
  EXPECT_EQ(back.meta.label, "P1-Morning");
  EXPECT_EQ(back.meta.seed, std::optional<std::uint64_t>(9));
  EXPECT_EQ(std::get<SyntheticSpec>(back.meta.source).config, cfg);
  EXPECT_EQ(serialize(back), text);
  EXPECT_TRUE(back.ended());
}

TEST(SessionRecordTest, WriterMatchesSerialize) {
  TempDir dir;
  const auto cfg = presets::vigilance_session(4.0, 0.5, 3);
  const auto rec = run_offline(synthesize(cfg), meta_for(cfg), tags_from_segments(cfg));
  const auto path = dir.file("s.jsonl");
  SessionRecordWriter w(path, rec.meta);
  for (const auto& e : rec.events) w.write(e);
  w.seal();
  EXPECT_EQ(slurp(path), serialize(rec));
  EXPECT_EQ(load_session(path).events, rec.events);
}

TEST(SessionRecordTest, EpochFrameShape) {
  const EpochEvent ev{{7, 12.5, 11.0, VigilanceState::Vigilant, true}};
  EXPECT_EQ(to_json(SessionEvent{ev}).dump(),
            R"({"type":"epoch","index":7,"theta_bp":12.5,"threshold":11.0,"state":"vigilant","valid":true})");
  const EpochEvent bad{{8, 0.0, 11.0, std::nullopt, false}};
  EXPECT_EQ(to_json(SessionEvent{bad}).dump(),
            R"({"type":"epoch","index":8,"theta_bp":0.0,"threshold":11.0,"state":null,"valid":false})");
}

TEST(SessionRecordTest, TruncatedLastLineNamesRecord) {
  const auto cfg = presets::vigilance_session(4.0, 0.0, 1);
  auto text = serialize(run_offline(synthesize(cfg), meta_for(cfg)));
  text.resize(text.size() - 10);
  const auto lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) + 1;
  std::istringstream in(text);
  try {
    parse_session_record(in);
    FAIL() << "expected RecordError";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.record(), lines);
    EXPECT_NE(std::string(e.what()).find("record " + std::to_string(lines)), std::string::npos);
  }
}

TEST(SessionRecordTest, EmptyFileIsAnError) {
  std::istringstream in("");
  EXPECT_THROW(parse_session_record(in), RecordError);
}

TEST(SessionRecordTest, UnknownTypeRejected) {
  const auto cfg = presets::vigilance_session();
  std::string text = serialize(SessionRecord{meta_for(cfg), {}});
  text += "{\"type\":\"mystery\"}\n";
  std::istringstream in(text);
  try {
    parse_session_record(in);
    FAIL();
  } catch (const RecordError& e) {
    EXPECT_EQ(e.record(), 2u);
  }
}

TEST(SessionRecordTest, MetaMustComeFirst) {
  std::istringstream in("{\"type\":\"ended\",\"reason\":\"requested\"}\n");
  EXPECT_THROW(parse_session_record(in), RecordError);
}

TEST(SessionRecordTest, EvaluateNeedsTags) {
  const auto cfg = presets::vigilance_session();
  const auto rec = run_offline(synthesize(cfg), meta_for(cfg));
  EXPECT_THROW(evaluate_session(rec), PreconditionError);
}

TEST(SessionRecordTest, ConfigJsonRoundTrip) {
  EpochConfig e;
  e.epoch_seconds = 4;
  e.window_fn = WindowFunction::Hann;
  e.band_lo_hz = 3.5;
  const auto back = epoch_config_from_json(to_json(e));
  EXPECT_EQ(back.epoch_seconds, 4);
  EXPECT_EQ(back.window_fn, WindowFunction::Hann);
  EXPECT_EQ(back.band_lo_hz, 3.5);
  try {
    epoch_config_from_json(json{{"band_lo_hz", "four"}});
    FAIL();
  } catch (const ConfigError& err) {
    EXPECT_EQ(err.field(), "band");
  }
}
