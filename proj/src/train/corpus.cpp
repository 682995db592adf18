#include "train/corpus.h"

#include <functional>

#include <json.hpp>

#include "codec/token_file.h"
#include "common/error.h"
#include "common/io_util.h"
#include "common/log.h"
#include "common/rng.h"

namespace quartet {

using nlohmann::json;

std::vector<CorpusFile> loadTokenDir(const std::filesystem::path& dir) {
  std::vector<CorpusFile> corpus;
  for (const auto& path : listFiles(dir, ".tokens")) {
    corpus.push_back(CorpusFile{path, readTokenFile(path)});
  }
  return corpus;
}

namespace {

/// Copies a [offset, offset+len) window of the file into a segment, padding
/// the tail with token 0 and marking padded positions in the keep mask.
TrainSegment cutSegment(const TokenStreams& streams, size_t offset, int segment_len) {
  TrainSegment segment;
  const size_t usable = streams.size() - 1;  // last token has no successor
  const auto L = static_cast<size_t>(segment_len);
  segment.keep.assign(L, 0);
  for (int s = 0; s < kNumStreams; ++s) {
    auto& inputs = segment.inputs[static_cast<size_t>(s)];
    auto& targets = segment.targets[static_cast<size_t>(s)];
    inputs.assign(L, 0);
    targets.assign(L, 0);
    const auto& tokens = streams.stream(s);
    for (size_t i = 0; i < L && offset + i < usable; ++i) {
      inputs[i] = tokens[offset + i];
      targets[i] = tokens[offset + i + 1];
      segment.keep[i] = 1;
    }
  }
  return segment;
}

}  // namespace

SegmentScheduler::SegmentScheduler(std::vector<const TokenStreams*> files, int segment_len,
                                   int n_lanes, uint64_t seed)
    : segment_len_(segment_len), seed_(seed) {
  if (segment_len < 1) throw DataError("segment length must be >= 1");
  if (n_lanes < 1) throw DataError("batch size must be >= 1");
  for (const TokenStreams* file : files) {
    if (file->size() >= 2) {
      files_.push_back(file);
    } else {
      logInfo("skipping token file with fewer than 2 notes");
    }
  }
  if (files_.empty()) throw DataError("no usable token files (need at least 2 notes each)");
  lanes_.resize(static_cast<size_t>(n_lanes));
}

void SegmentScheduler::refillQueue() {
  ++epoch_;
  queue_.resize(files_.size());
  for (size_t i = 0; i < files_.size(); ++i) queue_[i] = static_cast<int>(i);
  Rng rng(Rng::mix(seed_, static_cast<uint64_t>(epoch_)));
  rng.shuffle(queue_);
  queue_pos_ = 0;
}

int SegmentScheduler::pullNextFile() {
  if (epoch_ < 0 || queue_pos_ >= queue_.size()) refillQueue();
  return queue_[queue_pos_++];
}

TrainSegment SegmentScheduler::next(int lane) {
  LaneState& state = lanes_[static_cast<size_t>(lane)];
  bool file_start = false;
  if (state.file < 0 || state.offset >= files_[static_cast<size_t>(state.file)]->size() - 1) {
    state.file = pullNextFile();
    state.offset = 0;
    file_start = true;
  }
  TrainSegment segment =
      cutSegment(*files_[static_cast<size_t>(state.file)], state.offset, segment_len_);
  segment.file_start = file_start;
  segment.file_index = state.file;
  segment.epoch = epoch_;
  state.offset += static_cast<size_t>(segment_len_);
  return segment;
}

std::string SegmentScheduler::stateJson() const {
  json j;
  j["epoch"] = epoch_;
  j["queue_pos"] = queue_pos_;
  json lanes = json::array();
  for (const auto& lane : lanes_) {
    lanes.push_back({{"file", lane.file}, {"offset", lane.offset}});
  }
  j["lanes"] = lanes;
  return j.dump();
}

void SegmentScheduler::restoreState(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad scheduler state: ") + e.what());
  }
  const int64_t epoch = j.at("epoch");
  if (epoch >= 0) {
    // Regenerate the epoch's permutation, then reapply the cursor.
    epoch_ = epoch - 1;
    refillQueue();
    queue_pos_ = j.at("queue_pos");
  } else {
    epoch_ = -1;
    queue_pos_ = 0;
    queue_.clear();
  }
  const auto& lanes = j.at("lanes");
  if (lanes.size() != lanes_.size()) {
    throw DataError("scheduler state lane count mismatch");
  }
  for (size_t i = 0; i < lanes_.size(); ++i) {
    lanes_[i].file = lanes[i].at("file");
    lanes_[i].offset = lanes[i].at("offset");
  }
}

void forEachFileSegment(const TokenStreams& streams, int segment_len,
                        const std::function<void(const TrainSegment&)>& callback) {
  if (streams.size() < 2) return;
  const size_t usable = streams.size() - 1;
  bool first = true;
  for (size_t offset = 0; offset < usable; offset += static_cast<size_t>(segment_len)) {
    TrainSegment segment = cutSegment(streams, offset, segment_len);
    segment.file_start = first;
    first = false;
    callback(segment);
  }
}

}  // namespace quartet
