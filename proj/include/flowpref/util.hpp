#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace flowpref {

// Callback for non-fatal conditions (dropped samples, short selections, ...).
using WarningSink = std::function<void(const std::string&)>;

WarningSink null_warning_sink();
WarningSink stderr_warning_sink();

std::uint64_t fnv1a64(std::string_view data);
std::string to_hex(std::uint64_t value);

// splitmix64 mixing step; the deterministic RNG used for seeded choices.
std::uint64_t splitmix64(std::uint64_t state);

std::string trim(std::string_view text);
std::vector<std::string> split_lines(std::string_view text);

bool contains(std::string_view haystack, std::string_view needle);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Number of Unicode codepoints in a UTF-8 string (invalid bytes count as one each).
std::size_t utf8_codepoint_count(std::string_view text);

// Uniform double in [0, 1) from the top 53 bits of a 64-bit word. Used by the
// deterministic mocks so outputs do not depend on libstdc++ distribution details.
double unit_double_from_bits(std::uint64_t bits);

}  // namespace flowpref
