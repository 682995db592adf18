#pragma once

#include <cmath>
#include <vector>

#include "codec/token_streams.h"
#include "midi/midi_file.h"

namespace quartet::test {

/// Builds scores on the codec tick grid (1/384 of a whole note) with a
/// piecewise tempo map, then converts to seconds. Keeping every onset and
/// duration grid-aligned makes quantization exact, so fixture round trips
/// have no boundary cases.
class GridScoreBuilder {
 public:
  GridScoreBuilder& tempoAt(int grid_tick, double bpm) {
    tempos_.push_back({grid_tick, bpm});
    return *this;
  }

  GridScoreBuilder& note(int onset_tick, int duration_ticks, int pitch, int velocity) {
    notes_.push_back({onset_tick, duration_ticks, pitch, velocity});
    return *this;
  }

  MidiScore build() const {
    std::vector<std::pair<int, double>> tempos;
    for (const auto& t : tempos_) tempos.emplace_back(t.tick, t.bpm);
    if (tempos.empty() || tempos.front().first != 0) {
      tempos.insert(tempos.begin(), {0, 120.0});
    }
    auto seconds_at = [&tempos](int tick) {
      double seconds = 0.0;
      for (size_t i = 0; i < tempos.size(); ++i) {
        const int seg_start = tempos[i].first;
        const int seg_end = i + 1 < tempos.size() ? tempos[i + 1].first : tick;
        const int hi = std::min(tick, seg_end);
        if (hi > seg_start) {
          seconds += (hi - seg_start) * 240.0 / (384.0 * tempos[i].second);
        }
        if (tick <= seg_end) break;
      }
      return seconds;
    };
    MidiScore score;
    for (const auto& [tick, bpm] : tempos) {
      score.tempo_map.changes.push_back({seconds_at(tick), bpm});
    }
    for (const auto& n : notes_) {
      score.notes.push_back({seconds_at(n.onset), seconds_at(n.onset + n.duration),
                             static_cast<uint8_t>(n.pitch), static_cast<uint8_t>(n.velocity)});
    }
    score.sortNotes();
    return score;
  }

 private:
  struct TempoSpec {
    int tick;
    double bpm;
  };
  struct NoteSpec {
    int onset, duration, pitch, velocity;
  };
  std::vector<TempoSpec> tempos_;
  std::vector<NoteSpec> notes_;
};

/// The worked arpeggio example: a velocity-80 C major chord arpeggiated at
/// 120 bpm, released at the 2-second mark, then an F quarter note at
/// velocity 100 held one second at 60 bpm.
inline MidiScore arpeggioExampleScore() {
  return GridScoreBuilder()
      .tempoAt(0, 120.0)
      .tempoAt(384, 60.0)
      .note(0, 384, 60, 80)
      .note(96, 288, 64, 80)
      .note(192, 192, 67, 80)
      .note(480, 96, 65, 100)
      .build();
}

/// Expected token tuples for arpeggioExampleScore(), in (on2on, on2off, pitch,
/// velocity) order.
inline std::vector<std::array<int32_t, 4>> arpeggioExampleTokens() {
  return {{0, 384, 60, 80}, {96, 288, 64, 80}, {96, 192, 67, 80}, {288, 96, 65, 100}};
}

/// Hand-made fixture corpus: scales, chords, triplets, tempo changes,
/// re-attacks, grace notes. Deterministic; at least 20 pieces.
inline std::vector<MidiScore> fixtureCorpus() {
  std::vector<MidiScore> corpus;

  // Two-octave scales in eighth notes at four tempos.
  const int major[] = {0, 2, 4, 5, 7, 9, 11, 12, 14, 16, 17, 19, 21, 23, 24};
  for (double bpm : {60.0, 90.0, 120.0, 150.0}) {
    GridScoreBuilder builder;
    builder.tempoAt(0, bpm);
    int tick = 0;
    for (int step : major) {
      builder.note(tick, 48, 55 + step, 64 + step);
      tick += 48;
    }
    for (int i = 13; i >= 0; --i) {
      builder.note(tick, 48, 55 + major[i], 72);
      tick += 48;
    }
    corpus.push_back(builder.build());
  }

  // Chord progressions in quarters; two of them change tempo halfway.
  const int roots[] = {48, 53, 55, 50, 48, 57, 53, 55};
  for (int variant = 0; variant < 4; ++variant) {
    GridScoreBuilder builder;
    builder.tempoAt(0, 100.0 + 10 * variant);
    if (variant % 2 == 1) builder.tempoAt(4 * 96, 70.0);
    int tick = 0;
    for (int root : roots) {
      for (int interval : {0, 4, 7}) {
        builder.note(tick, 96, root + interval + variant, 90);
      }
      tick += 96;
    }
    corpus.push_back(builder.build());
  }

  // Triplet studies: triplet eighths are 32 grid ticks.
  for (int variant = 0; variant < 4; ++variant) {
    GridScoreBuilder builder;
    builder.tempoAt(0, 96.0 + 12 * variant);
    int tick = 0;
    for (int group = 0; group < 8; ++group) {
      const int base = 60 + (group * 2 + variant) % 12;
      for (int i = 0; i < 3; ++i) {
        builder.note(tick, 32, base + 2 * i, 70 + group);
        tick += 32;
      }
      if (variant == 3 && group % 2 == 1) {
        builder.note(tick, 96, base + 7, 85);  // straight quarter between triplet groups
        tick += 96;
      }
    }
    corpus.push_back(builder.build());
  }

  // Melodies crossing tempo changes, including one note held across a change.
  for (int variant = 0; variant < 4; ++variant) {
    GridScoreBuilder builder;
    builder.tempoAt(0, 120.0).tempoAt(240 + 48 * variant, 60.0).tempoAt(672, 90.0);
    int tick = 0;
    for (int i = 0; i < 16; ++i) {
      builder.note(tick, i == 7 ? 192 : 48, 62 + (i * 3 + variant) % 14, 60 + 2 * i);
      tick += i == 7 ? 192 : 48;
    }
    corpus.push_back(builder.build());
  }

  // Alberti bass under a slow melody, sixteenth notes of 24 ticks.
  for (int variant = 0; variant < 2; ++variant) {
    GridScoreBuilder builder;
    builder.tempoAt(0, 110.0 + 20 * variant);
    const int pattern[] = {0, 7, 4, 7};
    int tick = 0;
    for (int bar = 0; bar < 4; ++bar) {
      builder.note(tick, 384, 72 + (bar * 2 + variant) % 7, 96);  // melody whole note
      for (int i = 0; i < 16; ++i) {
        builder.note(tick, 24, 48 + pattern[i % 4] + bar, 56);
        tick += 24;
      }
    }
    corpus.push_back(builder.build());
  }

  // Long pedal tones: a ten-whole-note bass (the representation's maximum
  // duration) under moving quarters.
  {
    GridScoreBuilder builder;
    builder.tempoAt(0, 80.0);
    builder.note(0, 3840, 36, 100);
    int tick = 0;
    for (int i = 0; i < 40; ++i) {
      builder.note(tick, 96, 60 + (i * 5) % 24, 75);
      tick += 96;
    }
    corpus.push_back(builder.build());
  }

  // Same-pitch re-attacks: note-off and the next note-on share a tick.
  {
    GridScoreBuilder builder;
    builder.tempoAt(0, 120.0);
    int tick = 0;
    for (int i = 0; i < 24; ++i) {
      builder.note(tick, 96, 64, 80 + (i % 3) * 10);
      tick += 96;  // next onset exactly at the previous offset
    }
    corpus.push_back(builder.build());
  }

  // Wide leaps with extreme velocities.
  {
    GridScoreBuilder builder;
    builder.tempoAt(0, 132.0);
    int tick = 0;
    for (int i = 0; i < 20; ++i) {
      builder.note(tick, 72, i % 2 == 0 ? 36 + i : 96 - i, i % 2 == 0 ? 20 : 120);
      tick += 72;
    }
    corpus.push_back(builder.build());
  }

  // Grace notes: one-tick ornaments before each quarter.
  {
    GridScoreBuilder builder;
    builder.tempoAt(0, 90.0);
    int tick = 0;
    for (int i = 0; i < 12; ++i) {
      builder.note(tick, 1, 66 + i % 7, 50);
      builder.note(tick + 1, 95, 67 + i % 7, 88);
      tick += 96;
    }
    corpus.push_back(builder.build());
  }

  return corpus;
}

// ---------------------------------------------------------------------------
// Toy token corpus for overfit training: three short, strongly patterned
// files with distinct pitch registers.
// ---------------------------------------------------------------------------

inline TokenStreams toyFileA() {
  TokenStreams streams;
  const int pitches[] = {60, 64, 67, 72, 67, 64};
  const int velocities[] = {72, 84};
  for (int i = 0; i < 320; ++i) {
    streams.push(i == 0 ? 0 : 48, 48, pitches[i % 6], velocities[i % 2]);
  }
  return streams;
}

inline TokenStreams toyFileB() {
  TokenStreams streams;
  const int roots[] = {48, 53, 55, 50};
  const int intervals[] = {0, 4, 7};
  for (int i = 0; i < 318; ++i) {
    const int chord = i / 3;
    const int voice = i % 3;
    streams.push(voice == 0 && i > 0 ? 96 : 0, 96, roots[chord % 4] + intervals[voice], 90);
  }
  return streams;
}

inline TokenStreams toyFileC() {
  TokenStreams streams;
  const int gaps[] = {96, 48, 48};
  const int velocities[] = {60, 70, 80};
  const int span = 12;
  for (int i = 0; i < 321; ++i) {
    const int phase = i % (2 * span);
    const int pitch = 76 + (phase < span ? phase : 2 * span - phase);
    streams.push(i == 0 ? 0 : gaps[i % 3], gaps[i % 3], pitch, velocities[i % 3]);
  }
  return streams;
}

inline std::vector<TokenStreams> toyCorpus() { return {toyFileA(), toyFileB(), toyFileC()}; }

}  // namespace quartet::test
