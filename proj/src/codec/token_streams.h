#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "common/error.h"

namespace quartet {

inline constexpr int kNumStreams = 4;
enum StreamIndex { kOn2On = 0, kOn2Off = 1, kPitch = 2, kVelocity = 3 };
inline constexpr const char* kStreamNames[kNumStreams] = {"on2on", "on2off", "pitch", "velocity"};

/// Four parallel equal-length token sequences, one note per position:
/// on2on/on2off in codec ticks, pitch and velocity as raw MIDI values.
struct TokenStreams {
  std::vector<int32_t> on2on, on2off, pitch, velocity;
  std::array<int32_t, kNumStreams> vocab_sizes{3841, 3841, 128, 128};
  int ticks_per_whole = 384;

  size_t size() const { return on2on.size(); }
  bool empty() const { return on2on.empty(); }

  std::vector<int32_t>& stream(int index) {
    switch (index) {
      case kOn2On: return on2on;
      case kOn2Off: return on2off;
      case kPitch: return pitch;
      default: return velocity;
    }
  }
  const std::vector<int32_t>& stream(int index) const {
    return const_cast<TokenStreams*>(this)->stream(index);
  }

  void push(int32_t on2on_ticks, int32_t on2off_ticks, int32_t pitch_value,
            int32_t velocity_value) {
    on2on.push_back(on2on_ticks);
    on2off.push_back(on2off_ticks);
    pitch.push_back(pitch_value);
    velocity.push_back(velocity_value);
  }

  void validate() const {
    const size_t n = on2on.size();
    if (on2off.size() != n || pitch.size() != n || velocity.size() != n) {
      throw DataError("token streams have unequal lengths");
    }
    for (int s = 0; s < kNumStreams; ++s) {
      const auto& tokens = stream(s);
      for (int32_t token : tokens) {
        if (token < 0 || token >= vocab_sizes[static_cast<size_t>(s)]) {
          throw DataError(std::string("token ") + std::to_string(token) + " in stream " +
                          kStreamNames[s] + " outside vocabulary of " +
                          std::to_string(vocab_sizes[static_cast<size_t>(s)]));
        }
      }
    }
  }
};

}  // namespace quartet
