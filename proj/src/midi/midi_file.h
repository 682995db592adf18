/**
 * @file midi_file.h
 * @brief Standard MIDI File (format 0/1) reading and writing for piano data.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "common/error.h"

namespace quartet {

/// A sounding note in wall-clock time.
struct TimedNote {
  double onset = 0.0;   // seconds, >= 0
  double offset = 0.0;  // seconds, > onset
  uint8_t pitch = 0;    // 0..127
  uint8_t velocity = 0; // 1..127

  bool operator==(const TimedNote&) const = default;
};

struct TempoChange {
  double time = 0.0;  // seconds
  double bpm = 120.0; // quarter notes per minute, > 0
};

/// Piecewise-constant tempo over time. The first change is always at t = 0
/// (default 120 bpm when the file carries no set-tempo event).
struct TempoMap {
  std::vector<TempoChange> changes;

  static TempoMap constantTempo(double bpm);
  double bpmAt(double time) const;
  void validate() const;
};

struct MidiScore {
  std::vector<TimedNote> notes;  // sorted by (onset, pitch)
  TempoMap tempo_map;
  int ticks_per_quarter = 480;
  /// Count of NOTE_ONs left open at end of track, closed at the final event
  /// time during parsing.
  int unmatched_note_warnings = 0;

  double duration() const;
  void sortNotes();
  void validate() const;
};

/// Raised on malformed input; `byte_offset` points at the offending byte.
class MidiParseError : public DataError {
 public:
  MidiParseError(const std::string& message, size_t byte_offset)
      : DataError(message + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset(byte_offset) {}
  size_t byte_offset;
};

/// Parses a format 0/1 Standard MIDI File. All channels except percussion
/// (channel 10) are merged into a single note list; sustain pedal and other
/// controllers are ignored. NOTE_ON with velocity 0 closes a note. Tick
/// times are converted to seconds by piecewise integration over the tempo
/// map assembled from set-tempo meta events.
MidiScore parseMidi(std::span<const uint8_t> bytes);
MidiScore parseMidiFile(const std::filesystem::path& path);

/// Serializes a score as a format 0 file (notes plus set-tempo events).
/// parseMidi(writeMidi(s)) reproduces s within one tick of time error and
/// exactly in pitch/velocity.
std::vector<uint8_t> writeMidi(const MidiScore& score);
void writeMidiFile(const std::filesystem::path& path, const MidiScore& score);

}  // namespace quartet
