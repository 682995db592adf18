/**
 * @file corpus.h
 * @brief Token corpus loading and deterministic segment scheduling.
 *
 * Files are cut into consecutive teacher-forced segments of fixed length:
 * inputs are tokens 0..n-2, targets the tokens shifted by one. Each batch
 * lane consumes whole files in sequence, so recurrence memory is carried
 * across a file's segments and reset at file boundaries. The file order is
 * a seeded per-epoch shuffle, making runs reproducible and resumable.
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "codec/token_streams.h"

namespace quartet {

struct CorpusFile {
  std::filesystem::path path;
  TokenStreams streams;
};

/// Loads every .tokens file under dir, sorted by name.
std::vector<CorpusFile> loadTokenDir(const std::filesystem::path& dir);

struct TrainSegment {
  std::array<std::vector<int32_t>, kNumStreams> inputs;
  std::array<std::vector<int32_t>, kNumStreams> targets;
  std::vector<uint8_t> keep;  // 0 marks padding positions, excluded from loss
  bool file_start = false;    // reset this lane's memory before the forward
  int file_index = -1;
  int64_t epoch = 0;
};

class SegmentScheduler {
 public:
  /// Files shorter than two tokens are skipped (nothing to predict).
  SegmentScheduler(std::vector<const TokenStreams*> files, int segment_len, int n_lanes,
                   uint64_t seed);

  TrainSegment next(int lane);

  int usableFileCount() const { return static_cast<int>(files_.size()); }

  std::string stateJson() const;
  void restoreState(const std::string& json_text);

 private:
  void refillQueue();
  int pullNextFile();

  struct LaneState {
    int file = -1;
    size_t offset = 0;  // position within the file's input sequence
  };

  std::vector<const TokenStreams*> files_;
  int segment_len_;
  uint64_t seed_;
  int64_t epoch_ = -1;
  size_t queue_pos_ = 0;
  std::vector<int> queue_;
  std::vector<LaneState> lanes_;
};

/// Cuts one file into consecutive segments (batch lane of one), invoking
/// the callback in order. Used for validation sweeps.
void forEachFileSegment(const TokenStreams& streams, int segment_len,
                        const std::function<void(const TrainSegment&)>& callback);

}  // namespace quartet
