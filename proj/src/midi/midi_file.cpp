/// @file
/// @brief SMF format 0/1 parsing and writing.

#include "midi/midi_file.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <map>

#include "common/io_util.h"

namespace quartet {

namespace {

constexpr double kDefaultBpm = 120.0;
constexpr double kMicrosecondsPerMinute = 60e6;

// ---------------------------------------------------------------------------
// Tick-domain tempo map: set-tempo events collected before any time
// conversion happens, so note matching stays in integer ticks.
// ---------------------------------------------------------------------------

struct TickTempo {
  int64_t tick;
  double bpm;
};

/// Converts a tick-domain tempo list (sorted, deduplicated, starting at 0)
/// into cumulative seconds.
class TickClock {
 public:
  TickClock(std::vector<TickTempo> tempos, int ticks_per_quarter)
      : tempos_(std::move(tempos)), tpq_(ticks_per_quarter) {
    seconds_at_.reserve(tempos_.size());
    double t = 0.0;
    for (size_t i = 0; i < tempos_.size(); ++i) {
      if (i > 0) {
        const auto& prev = tempos_[i - 1];
        t += static_cast<double>(tempos_[i].tick - prev.tick) * 60.0 / (prev.bpm * tpq_);
      }
      seconds_at_.push_back(t);
    }
  }

  double secondsAt(int64_t tick) const {
    size_t i = segmentFor(tick);
    return seconds_at_[i] +
           static_cast<double>(tick - tempos_[i].tick) * 60.0 / (tempos_[i].bpm * tpq_);
  }

  TempoMap tempoMap() const {
    TempoMap map;
    for (size_t i = 0; i < tempos_.size(); ++i) {
      map.changes.push_back({seconds_at_[i], tempos_[i].bpm});
    }
    return map;
  }

 private:
  size_t segmentFor(int64_t tick) const {
    size_t lo = 0, hi = tempos_.size();
    while (lo + 1 < hi) {
      const size_t mid = (lo + hi) / 2;
      if (tempos_[mid].tick <= tick) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  std::vector<TickTempo> tempos_;
  std::vector<double> seconds_at_;
  int tpq_;
};

// ---------------------------------------------------------------------------
// Byte-level reading
// ---------------------------------------------------------------------------

struct Cursor {
  const uint8_t* data;
  size_t size;
  size_t pos = 0;

  uint8_t byte() {
    if (pos >= size) throw MidiParseError("unexpected end of data", pos);
    return data[pos++];
  }

  uint8_t peek() const {
    if (pos >= size) throw MidiParseError("unexpected end of data", pos);
    return data[pos];
  }

  uint32_t be32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | byte();
    return v;
  }

  uint16_t be16() {
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v = static_cast<uint16_t>((v << 8) | byte());
    return v;
  }

  /// MIDI variable-length quantity, at most 4 bytes.
  uint32_t varLen() {
    uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
      const uint8_t b = byte();
      value = (value << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return value;
    }
    throw MidiParseError("variable-length quantity too long", pos);
  }

  void skip(size_t n) {
    if (pos + n > size) throw MidiParseError("unexpected end of data", pos);
    pos += n;
  }
};

struct RawNoteEvent {
  int64_t tick;
  uint8_t channel;
  uint8_t pitch;
  uint8_t velocity;  // 0 means note-off
  bool is_on;
};

struct TrackEvents {
  std::vector<RawNoteEvent> notes;
  std::vector<TickTempo> tempos;
  int64_t end_tick = 0;
};

/// Reads one MTrk chunk into raw tick-domain events. Only note on/off and
/// set-tempo are retained; everything else is skipped by length.
TrackEvents parseTrack(Cursor& cursor) {
  if (cursor.pos + 8 > cursor.size) {
    throw MidiParseError("missing track chunk", cursor.pos);
  }
  if (std::memcmp(cursor.data + cursor.pos, "MTrk", 4) != 0) {
    throw MidiParseError("expected MTrk chunk", cursor.pos);
  }
  cursor.skip(4);
  const uint32_t length = cursor.be32();
  const size_t track_end = cursor.pos + length;
  if (track_end > cursor.size) {
    throw MidiParseError("track chunk exceeds file size", cursor.pos);
  }

  TrackEvents events;
  int64_t tick = 0;
  uint8_t running_status = 0;

  while (cursor.pos < track_end) {
    tick += cursor.varLen();
    events.end_tick = std::max(events.end_tick, tick);

    const uint8_t lead = cursor.peek();
    if (lead == 0xFF) {
      // Meta event.
      cursor.skip(1);
      const uint8_t type = cursor.byte();
      const uint32_t len = cursor.varLen();
      if (cursor.pos + len > track_end) {
        throw MidiParseError("meta event exceeds track", cursor.pos);
      }
      if (type == 0x51 && len == 3) {
        uint32_t usec_per_quarter = 0;
        for (int i = 0; i < 3; ++i) usec_per_quarter = (usec_per_quarter << 8) | cursor.byte();
        if (usec_per_quarter > 0) {
          events.tempos.push_back({tick, kMicrosecondsPerMinute / usec_per_quarter});
        }
      } else if (type == 0x2F) {
        cursor.skip(len);
        break;  // end of track
      } else {
        cursor.skip(len);
      }
      continue;
    }
    if (lead == 0xF0 || lead == 0xF7) {
      // SysEx: length-prefixed payload.
      cursor.skip(1);
      const uint32_t len = cursor.varLen();
      cursor.skip(len);
      continue;
    }

    uint8_t status;
    if (lead & 0x80) {
      status = cursor.byte();
      running_status = status;
    } else {
      if (running_status == 0) {
        throw MidiParseError("data byte without running status", cursor.pos);
      }
      status = running_status;
    }

    const uint8_t kind = status & 0xF0;
    const uint8_t channel = status & 0x0F;
    switch (kind) {
      case 0x80:    // note off
      case 0x90: {  // note on
        const uint8_t pitch = cursor.byte() & 0x7F;
        const uint8_t velocity = cursor.byte() & 0x7F;
        const bool is_on = kind == 0x90 && velocity > 0;
        events.notes.push_back({tick, channel, pitch, is_on ? velocity : uint8_t(0), is_on});
        break;
      }
      case 0xA0:  // key pressure
      case 0xB0:  // control change
      case 0xE0:  // pitch bend
        cursor.skip(2);
        break;
      case 0xC0:  // program change
      case 0xD0:  // channel pressure
        cursor.skip(1);
        break;
      default:
        throw MidiParseError("unknown status byte " + std::to_string(status), cursor.pos - 1);
    }
  }
  cursor.pos = track_end;
  return events;
}

void writeVarLen(std::vector<uint8_t>& out, uint32_t value) {
  uint8_t stack[5];
  int n = 0;
  do {
    stack[n++] = value & 0x7F;
    value >>= 7;
  } while (value > 0);
  while (n > 1) out.push_back(stack[--n] | 0x80);
  out.push_back(stack[0]);
}

void writeBe32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void writeBe16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

}  // namespace

// ---------------------------------------------------------------------------
// TempoMap / MidiScore
// ---------------------------------------------------------------------------

TempoMap TempoMap::constantTempo(double bpm) {
  TempoMap map;
  map.changes.push_back({0.0, bpm});
  return map;
}

double TempoMap::bpmAt(double time) const {
  double bpm = kDefaultBpm;
  for (const auto& change : changes) {
    if (change.time <= time) {
      bpm = change.bpm;
    } else {
      break;
    }
  }
  return bpm;
}

void TempoMap::validate() const {
  if (changes.empty() || changes.front().time != 0.0) {
    throw DataError("tempo map must start at time 0");
  }
  for (size_t i = 0; i < changes.size(); ++i) {
    if (changes[i].bpm <= 0.0) throw DataError("tempo must be positive");
    if (i > 0 && changes[i].time <= changes[i - 1].time) {
      throw DataError("tempo change times must be strictly increasing");
    }
  }
}

double MidiScore::duration() const {
  double end = 0.0;
  for (const auto& note : notes) end = std::max(end, note.offset);
  return end;
}

void MidiScore::sortNotes() {
  std::sort(notes.begin(), notes.end(), [](const TimedNote& a, const TimedNote& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    if (a.pitch != b.pitch) return a.pitch < b.pitch;
    if (a.offset != b.offset) return a.offset < b.offset;
    return a.velocity < b.velocity;
  });
}

void MidiScore::validate() const {
  tempo_map.validate();
  if (ticks_per_quarter <= 0 || ticks_per_quarter > 0x7FFF) {
    throw DataError("ticks_per_quarter must be in [1, 32767]");
  }
  for (const auto& note : notes) {
    if (note.offset <= note.onset) throw DataError("note offset must follow its onset");
    if (note.onset < 0.0) throw DataError("note onset must be non-negative");
    if (note.pitch > 127) throw DataError("pitch out of range");
    if (note.velocity < 1 || note.velocity > 127) throw DataError("velocity out of range");
  }
}

// ---------------------------------------------------------------------------
// parseMidi
// ---------------------------------------------------------------------------

MidiScore parseMidi(std::span<const uint8_t> bytes) {
  Cursor cursor{bytes.data(), bytes.size()};
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "MThd", 4) != 0) {
    throw MidiParseError("missing MThd header", 0);
  }
  cursor.skip(4);
  const uint32_t header_len = cursor.be32();
  if (header_len < 6) throw MidiParseError("header chunk too short", cursor.pos);
  const uint16_t format = cursor.be16();
  const uint16_t n_tracks = cursor.be16();
  const uint16_t division = cursor.be16();
  cursor.skip(header_len - 6);

  if (format > 1) {
    throw MidiParseError("unsupported MIDI format " + std::to_string(format), 8);
  }
  if (division & 0x8000) {
    throw MidiParseError("SMPTE time division is not supported", 12);
  }
  if (division == 0) {
    throw MidiParseError("ticks per quarter must be positive", 12);
  }

  std::vector<TrackEvents> tracks;
  tracks.reserve(n_tracks);
  for (uint16_t i = 0; i < n_tracks; ++i) {
    tracks.push_back(parseTrack(cursor));
  }

  // Tempo events from every track merged into one timeline (format 1 keeps
  // them in track 0, but stray events elsewhere are honored too).
  std::vector<TickTempo> tempos;
  for (const auto& track : tracks) {
    tempos.insert(tempos.end(), track.tempos.begin(), track.tempos.end());
  }
  std::stable_sort(tempos.begin(), tempos.end(),
                   [](const TickTempo& a, const TickTempo& b) { return a.tick < b.tick; });
  // Same-tick changes: last one wins.
  std::vector<TickTempo> deduped;
  for (const auto& tempo : tempos) {
    if (!deduped.empty() && deduped.back().tick == tempo.tick) {
      deduped.back().bpm = tempo.bpm;
    } else {
      deduped.push_back(tempo);
    }
  }
  if (deduped.empty() || deduped.front().tick != 0) {
    deduped.insert(deduped.begin(), {0, kDefaultBpm});
  }
  TickClock clock(std::move(deduped), division);

  MidiScore score;
  score.ticks_per_quarter = division;
  score.tempo_map = clock.tempoMap();

  // Note matching in tick space, FIFO per (channel, pitch). Channel 10
  // (index 9) is percussion and dropped.
  for (const auto& track : tracks) {
    std::map<std::pair<uint8_t, uint8_t>, std::deque<std::pair<int64_t, uint8_t>>> open;
    for (const auto& event : track.notes) {
      if (event.channel == 9) continue;
      const auto key = std::make_pair(event.channel, event.pitch);
      if (event.is_on) {
        open[key].emplace_back(event.tick, event.velocity);
      } else {
        auto it = open.find(key);
        if (it == open.end() || it->second.empty()) continue;  // stray note-off
        const auto [on_tick, velocity] = it->second.front();
        it->second.pop_front();
        if (event.tick > on_tick) {
          score.notes.push_back({clock.secondsAt(on_tick), clock.secondsAt(event.tick),
                                 event.pitch, velocity});
        }
      }
    }
    // Notes still open at end of track close at the final event time.
    for (auto& [key, queue] : open) {
      for (const auto& [on_tick, velocity] : queue) {
        ++score.unmatched_note_warnings;
        if (track.end_tick > on_tick) {
          score.notes.push_back({clock.secondsAt(on_tick), clock.secondsAt(track.end_tick),
                                 key.second, velocity});
        }
      }
    }
  }

  score.sortNotes();
  return score;
}

MidiScore parseMidiFile(const std::filesystem::path& path) {
  const auto bytes = readFileBytes(path);
  return parseMidi(bytes);
}

// ---------------------------------------------------------------------------
// writeMidi
// ---------------------------------------------------------------------------

std::vector<uint8_t> writeMidi(const MidiScore& score) {
  score.validate();
  const int tpq = score.ticks_per_quarter;

  // Seconds -> ticks by inverting the piecewise-constant tempo map.
  std::vector<int64_t> change_ticks(score.tempo_map.changes.size());
  {
    double tick_acc = 0.0;
    for (size_t i = 0; i < score.tempo_map.changes.size(); ++i) {
      if (i > 0) {
        const auto& prev = score.tempo_map.changes[i - 1];
        tick_acc += (score.tempo_map.changes[i].time - prev.time) * prev.bpm * tpq / 60.0;
      }
      change_ticks[i] = std::llround(tick_acc);
    }
  }
  auto toTick = [&](double time) {
    size_t i = 0;
    while (i + 1 < score.tempo_map.changes.size() &&
           score.tempo_map.changes[i + 1].time <= time) {
      ++i;
    }
    const auto& change = score.tempo_map.changes[i];
    const double exact =
        static_cast<double>(change_ticks[i]) + (time - change.time) * change.bpm * tpq / 60.0;
    return std::llround(exact);
  };

  // Event assembly. Order at equal ticks: tempo, then note-offs, then
  // note-ons, so re-attacked pitches parse back with FIFO matching.
  struct Event {
    int64_t tick;
    int order;
    std::vector<uint8_t> bytes;
  };
  std::vector<Event> events;
  for (size_t i = 0; i < score.tempo_map.changes.size(); ++i) {
    const auto usec = static_cast<uint32_t>(
        std::llround(kMicrosecondsPerMinute / score.tempo_map.changes[i].bpm));
    events.push_back({change_ticks[i], 0,
                      {0xFF, 0x51, 0x03, static_cast<uint8_t>(usec >> 16),
                       static_cast<uint8_t>(usec >> 8), static_cast<uint8_t>(usec)}});
  }
  for (const auto& note : score.notes) {
    const int64_t on_tick = toTick(note.onset);
    int64_t off_tick = toTick(note.offset);
    if (off_tick <= on_tick) off_tick = on_tick + 1;  // sub-tick note still sounds
    events.push_back({on_tick, 2, {0x90, note.pitch, note.velocity}});
    events.push_back({off_tick, 1, {0x80, note.pitch, 0x40}});
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    return a.order < b.order;
  });

  std::vector<uint8_t> track;
  int64_t last_tick = 0;
  for (const auto& event : events) {
    writeVarLen(track, static_cast<uint32_t>(event.tick - last_tick));
    track.insert(track.end(), event.bytes.begin(), event.bytes.end());
    last_tick = event.tick;
  }
  // End of track.
  writeVarLen(track, 0);
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  writeBe32(out, 6);
  writeBe16(out, 0);  // format 0
  writeBe16(out, 1);  // single track
  writeBe16(out, static_cast<uint16_t>(tpq));
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  writeBe32(out, static_cast<uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

void writeMidiFile(const std::filesystem::path& path, const MidiScore& score) {
  const auto bytes = writeMidi(score);
  writeFileAtomic(path, bytes.data(), bytes.size());
}

}  // namespace quartet
