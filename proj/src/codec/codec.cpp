#include "codec/codec.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace quartet {

void CodecConfig::validate() const {
  if (ticks_per_whole <= 0 || ticks_per_whole % 3 != 0) {
    throw DataError("ticks_per_whole must be positive and divisible by 3");
  }
  if (max_ticks <= 0) throw DataError("max_ticks must be positive");
  if (default_tempo_bpm <= 0.0) throw DataError("decode tempo must be positive");
  if (decode_ticks_per_quarter <= 0) throw DataError("decode ticks_per_quarter must be positive");
}

double noteValue(double duration_seconds, double tempo_bpm) {
  if (tempo_bpm <= 0.0) throw DataError("tempo must be positive");
  if (duration_seconds < 0.0) throw DataError("duration must be non-negative");
  return duration_seconds * tempo_bpm / 240.0;
}

double beatsBetween(double t0, double t1, const TempoMap& tempo_map) {
  if (t0 > t1) throw DataError("beatsBetween: interval is reversed");
  tempo_map.validate();
  double total = 0.0;
  const auto& changes = tempo_map.changes;
  for (size_t i = 0; i < changes.size(); ++i) {
    const double seg_start = changes[i].time;
    const double seg_end =
        i + 1 < changes.size() ? changes[i + 1].time : std::numeric_limits<double>::infinity();
    const double lo = std::max(t0, seg_start);
    const double hi = std::min(t1, seg_end);
    if (hi > lo) total += (hi - lo) * changes[i].bpm / 240.0;
  }
  return total;
}

namespace {

int32_t roundToTicks(double whole_notes, int ticks_per_whole) {
  // Half-away-from-zero; values here are always non-negative.
  return static_cast<int32_t>(std::llround(whole_notes * ticks_per_whole));
}

}  // namespace

TokenStreams encode(const MidiScore& score, const CodecConfig& config, EncodeStats* stats) {
  config.validate();
  TokenStreams streams;
  streams.ticks_per_whole = config.ticks_per_whole;
  streams.vocab_sizes = {config.max_ticks + 1, config.max_ticks + 1, 128, 128};
  if (score.notes.empty()) return streams;

  // Stats report the emitted (post-clamp) maxima; clamp counts record how
  // often the raw value exceeded the range.
  EncodeStats local;
  for (size_t i = 0; i < score.notes.size(); ++i) {
    const TimedNote& note = score.notes[i];
    int32_t on2on = 0;
    if (i > 0) {
      const double gap = beatsBetween(score.notes[i - 1].onset, note.onset, score.tempo_map);
      on2on = roundToTicks(gap, config.ticks_per_whole);
      if (on2on > config.max_ticks) {
        on2on = config.max_ticks;
        ++local.on2on_clamped;
      }
      local.max_on2on = std::max(local.max_on2on, on2on);
    }
    const double held = beatsBetween(note.onset, note.offset, score.tempo_map);
    int32_t on2off = roundToTicks(held, config.ticks_per_whole);
    if (on2off > config.max_ticks) {
      on2off = config.max_ticks;
      ++local.on2off_clamped;
    }
    if (on2off < 1) on2off = 1;  // a note must sound
    local.max_on2off = std::max(local.max_on2off, on2off);
    streams.push(on2on, on2off, note.pitch, note.velocity);
  }
  local.notes = static_cast<int64_t>(score.notes.size());
  if (stats != nullptr) stats->merge(local);
  return streams;
}

MidiScore decode(const TokenStreams& streams, const CodecConfig& config) {
  config.validate();
  streams.validate();
  MidiScore score;
  score.tempo_map = TempoMap::constantTempo(config.default_tempo_bpm);
  score.ticks_per_quarter = config.decode_ticks_per_quarter;
  const double seconds_per_tick =
      240.0 / (static_cast<double>(config.ticks_per_whole) * config.default_tempo_bpm);
  double onset = 0.0;
  for (size_t i = 0; i < streams.size(); ++i) {
    onset += streams.on2on[i] * seconds_per_tick;
    const double offset = onset + streams.on2off[i] * seconds_per_tick;
    score.notes.push_back({onset, offset, static_cast<uint8_t>(streams.pitch[i]),
                           static_cast<uint8_t>(streams.velocity[i])});
  }
  score.sortNotes();
  return score;
}

}  // namespace quartet
