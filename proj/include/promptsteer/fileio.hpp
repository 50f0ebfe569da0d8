#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace promptsteer {

std::string read_text_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);

/// Writes to "<path>.tmp" then renames over `path`, so readers never see a
/// truncated file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace promptsteer
