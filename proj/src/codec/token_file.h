/**
 * @file token_file.h
 * @brief JSON-lines container for token streams (.tokens files).
 *
 * Line 1 is a header object:
 *   {"format":"quartet-tokens","version":1,"ticks_per_whole":384,
 *    "vocab_on2on":3841,"vocab_on2off":3841,"vocab_pitch":128,
 *    "vocab_velocity":128}
 * Every following line is one note as a 4-element array
 * [on2on, on2off, pitch, velocity]. The line-per-note layout lets a
 * generator append tuples incrementally without buffering the whole piece.
 */
#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "codec/token_streams.h"

namespace quartet {

std::string tokenHeaderLine(const TokenStreams& streams);
std::string tokenTupleLine(int32_t on2on, int32_t on2off, int32_t pitch, int32_t velocity);

std::string serializeTokens(const TokenStreams& streams);
TokenStreams parseTokens(const std::string& text, const std::string& origin = "<memory>");

void writeTokenFile(const std::filesystem::path& path, const TokenStreams& streams);
TokenStreams readTokenFile(const std::filesystem::path& path);

/// Streaming writer used by generation: header up front, one tuple per call,
/// atomically renamed into place on finish().
class TokenFileWriter {
 public:
  TokenFileWriter(std::filesystem::path path, const TokenStreams& header_source);
  ~TokenFileWriter();

  void append(int32_t on2on, int32_t on2off, int32_t pitch, int32_t velocity);
  void finish();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::unique_ptr<std::ofstream> out_;
  bool finished_ = false;
};

}  // namespace quartet
