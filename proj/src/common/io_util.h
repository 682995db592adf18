#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace quartet {

std::vector<uint8_t> readFileBytes(const std::filesystem::path& path);
std::string readFileText(const std::filesystem::path& path);

/// Writes via a sibling temp file then renames, so interrupted runs never
/// leave a truncated artifact at the destination.
void writeFileAtomic(const std::filesystem::path& path, const void* data, size_t size);
void writeFileAtomic(const std::filesystem::path& path, const std::string& text);

void ensureDir(const std::filesystem::path& dir);

/// Regular files under `dir` whose name ends with `extension`, sorted by name.
/// Empty extension lists every regular file.
std::vector<std::filesystem::path> listFiles(const std::filesystem::path& dir,
                                             const std::string& extension);

}  // namespace quartet
