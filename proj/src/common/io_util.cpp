#include "common/io_util.h"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "common/error.h"

namespace quartet {

namespace fs = std::filesystem;

std::vector<uint8_t> readFileBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  if (size > 0) {
    in.read(reinterpret_cast<char*>(bytes.data()), size);
  }
  if (!in) {
    throw DataError("failed to read file: " + path.string());
  }
  return bytes;
}

std::string readFileText(const fs::path& path) {
  auto bytes = readFileBytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void writeFileAtomic(const fs::path& path, const void* data, size_t size) {
  if (path.has_parent_path()) {
    ensureDir(path.parent_path());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot open file for writing: " + tmp.string());
    }
    if (size > 0) {
      out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    }
    out.flush();
    if (!out) {
      throw DataError("failed to write file: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("failed to move " + tmp.string() + " to " + path.string());
  }
}

void writeFileAtomic(const fs::path& path, const std::string& text) {
  writeFileAtomic(path, text.data(), text.size());
}

void ensureDir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir)) {
    throw DataError("cannot create directory: " + dir.string());
  }
}

std::vector<fs::path> listFiles(const fs::path& dir, const std::string& extension) {
  if (!fs::is_directory(dir)) {
    throw DataError("not a directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (extension.empty() ||
        (name.size() >= extension.size() &&
         name.compare(name.size() - extension.size(), extension.size(), extension) == 0)) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace quartet
