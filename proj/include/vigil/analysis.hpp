#pragma once

#include <span>
#include <string>
#include <vector>

#include "vigil/pipeline.hpp"
#include "vigil/record.hpp"
#include "vigil/source.hpp"

namespace vigil {

// Runs a whole source through the pipeline and returns the session record
// that the service would have persisted. Tags are interleaved in sample-time
// order: a tag at t is written before the first sample with t' >= t.
inline SessionRecord run_offline(SampleSource& source, const SessionMeta& meta,
                                 std::span<const EyeStatusTag> tags = {}) {
  validate(meta.epoch_cfg);
  validate(meta.calib_cfg);
  SessionRecord rec;
  rec.meta = meta;
  Pipeline pipeline(meta.epoch_cfg, meta.calib_cfg);
  for (auto& e : pipeline.start()) rec.events.push_back(std::move(e));
  std::size_t next_tag = 0;
  while (auto s = source.next()) {
    while (next_tag < tags.size() && tags[next_tag].t <= s->t) rec.events.emplace_back(TagEvent{tags[next_tag++]});
    for (auto& e : pipeline.push(*s)) rec.events.push_back(std::move(e));
  }
  while (next_tag < tags.size()) rec.events.emplace_back(TagEvent{tags[next_tag++]});
  rec.events.emplace_back(EndedEvent{end_reason::kSourceExhausted, source.skip_count()});
  return rec;
}

inline SessionRecord run_offline(const std::vector<Sample>& samples, const SessionMeta& meta,
                                 std::span<const EyeStatusTag> tags = {}) {
  VectorSource src(samples);
  return run_offline(src, meta, tags);
}

}  // namespace vigil
