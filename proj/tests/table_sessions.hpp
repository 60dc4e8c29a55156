#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "table_data.hpp"
#include "vigil/record.hpp"

namespace vigil::test {

// Smallest epoch count n <= 40 and hit count k with 100*k/n rounding to the
// printed percentage.
inline std::pair<std::size_t, std::size_t> epochs_for_percent(double pct) {
  for (std::size_t n = 30; n <= 40; ++n) {
    const auto k = static_cast<std::size_t>(std::lround(pct * static_cast<double>(n) / 100.0));
    if (std::abs(100.0 * static_cast<double>(k) / static_cast<double>(n) - pct) < 0.005) return {n, k};
  }
  throw std::logic_error("no epoch count reproduces " + std::to_string(pct));
}

// A finished session record whose monitored epochs are all labeled closed and
// whose accuracy is k/n.
inline SessionRecord table_session(const std::string& id, SessionMode mode, const std::string& label, double pct) {
  const auto [n, k] = epochs_for_percent(pct);
  SessionRecord rec;
  rec.meta.session_id = id;
  rec.meta.source = ReplaySpec{id + ".csv", 0.0};
  rec.meta.mode = mode;
  rec.meta.label = label;
  rec.events.emplace_back(PhaseEvent{SessionPhase::calibrating(0)});
  rec.events.emplace_back(TagEvent{{0.0, EyeStatus::Closed}});
  rec.events.emplace_back(BaselineEvent{BaselineProfile::make(10.0, 1.1), false});
  rec.events.emplace_back(PhaseEvent{SessionPhase::monitoring()});
  for (std::size_t i = 0; i < n; ++i) {
    const bool hit = i < k;
    rec.events.emplace_back(EpochEvent{{6 + i, hit ? 9.0 : 12.0, 11.0,
                                        hit ? VigilanceState::NonVigilant : VigilanceState::Vigilant, true}});
  }
  rec.events.emplace_back(EndedEvent{"source_exhausted", 0});
  return rec;
}

// Writes the 24 published sessions (12 slots x 2 modes) into dir and returns
// their paths, instructed first.
inline std::vector<std::string> write_table_sessions(const std::string& dir) {
  std::vector<std::string> paths;
  for (int m = 0; m < 2; ++m) {
    const auto mode = m == 0 ? SessionMode::Instructed : SessionMode::Natural;
    const auto& column = m == 0 ? kInstructedPct : kNaturalPct;
    for (std::size_t i = 0; i < 12; ++i) {
      const std::string id = slot_label(i) + "-" + std::string(to_string(mode));
      const std::string path = dir + "/" + id + ".jsonl";
      std::ofstream(path, std::ios::binary) << serialize(table_session(id, mode, slot_label(i), column[i]));
      paths.push_back(path);
    }
  }
  return paths;
}

}  // namespace vigil::test
