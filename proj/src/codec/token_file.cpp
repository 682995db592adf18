#include "codec/token_file.h"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "common/io_util.h"

namespace quartet {

using nlohmann::json;

namespace {
constexpr const char* kFormatName = "quartet-tokens";
constexpr int kFormatVersion = 1;
}  // namespace

std::string tokenHeaderLine(const TokenStreams& streams) {
  json header;
  header["format"] = kFormatName;
  header["version"] = kFormatVersion;
  header["ticks_per_whole"] = streams.ticks_per_whole;
  for (int s = 0; s < kNumStreams; ++s) {
    header[std::string("vocab_") + kStreamNames[s]] = streams.vocab_sizes[static_cast<size_t>(s)];
  }
  return header.dump();
}

std::string tokenTupleLine(int32_t on2on, int32_t on2off, int32_t pitch, int32_t velocity) {
  std::ostringstream line;
  line << "[" << on2on << "," << on2off << "," << pitch << "," << velocity << "]";
  return line.str();
}

std::string serializeTokens(const TokenStreams& streams) {
  streams.validate();
  std::ostringstream out;
  out << tokenHeaderLine(streams) << "\n";
  for (size_t i = 0; i < streams.size(); ++i) {
    out << tokenTupleLine(streams.on2on[i], streams.on2off[i], streams.pitch[i],
                          streams.velocity[i])
        << "\n";
  }
  return out.str();
}

TokenStreams parseTokens(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(origin + ": empty token file");
  }
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(origin + ": bad token header: " + e.what());
  }
  if (header.value("format", "") != kFormatName) {
    throw DataError(origin + ": not a " + kFormatName + " file");
  }
  if (header.value("version", 0) != kFormatVersion) {
    throw DataError(origin + ": unsupported token file version");
  }
  TokenStreams streams;
  streams.ticks_per_whole = header.value("ticks_per_whole", 384);
  for (int s = 0; s < kNumStreams; ++s) {
    const std::string key = std::string("vocab_") + kStreamNames[s];
    if (header.contains(key)) streams.vocab_sizes[static_cast<size_t>(s)] = header[key];
  }
  size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json tuple;
    try {
      tuple = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(origin + ":" + std::to_string(line_number) + ": bad tuple: " + e.what());
    }
    if (!tuple.is_array() || tuple.size() != 4) {
      throw DataError(origin + ":" + std::to_string(line_number) + ": expected a 4-element array");
    }
    streams.push(tuple[0], tuple[1], tuple[2], tuple[3]);
  }
  streams.validate();
  return streams;
}

void writeTokenFile(const std::filesystem::path& path, const TokenStreams& streams) {
  writeFileAtomic(path, serializeTokens(streams));
}

TokenStreams readTokenFile(const std::filesystem::path& path) {
  return parseTokens(readFileText(path), path.string());
}

// ---------------------------------------------------------------------------
// TokenFileWriter
// ---------------------------------------------------------------------------

TokenFileWriter::TokenFileWriter(std::filesystem::path path, const TokenStreams& header_source)
    : path_(std::move(path)) {
  if (path_.has_parent_path()) ensureDir(path_.parent_path());
  tmp_path_ = path_;
  tmp_path_ += ".tmp";
  out_ = std::make_unique<std::ofstream>(tmp_path_, std::ios::trunc);
  if (!*out_) {
    throw DataError("cannot open file for writing: " + tmp_path_.string());
  }
  *out_ << tokenHeaderLine(header_source) << "\n";
}

TokenFileWriter::~TokenFileWriter() {
  if (!finished_) {
    // Abandoned writer: drop the partial temp file.
    out_.reset();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void TokenFileWriter::append(int32_t on2on, int32_t on2off, int32_t pitch, int32_t velocity) {
  *out_ << tokenTupleLine(on2on, on2off, pitch, velocity) << "\n";
}

void TokenFileWriter::finish() {
  out_->flush();
  if (!*out_) {
    throw DataError("failed to write token file: " + tmp_path_.string());
  }
  out_.reset();
  std::error_code ec;
  std::filesystem::rename(tmp_path_, path_, ec);
  if (ec) {
    throw DataError("failed to move " + tmp_path_.string() + " to " + path_.string());
  }
  finished_ = true;
}

}  // namespace quartet
