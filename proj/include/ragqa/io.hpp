#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ragqa {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file, fsyncs it and renames it over the
/// target, so readers see either the old or the new content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Calls fn(record, line_index) for each non-blank line. line_index is 0-based
/// over all physical lines. Parse errors are reported with the line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn);

std::vector<json> read_jsonl(const std::filesystem::path& path);

/// One compact JSON object per line, each terminated by '\n'.
std::string to_jsonl(const std::vector<json>& records);

std::string file_sha256(const std::filesystem::path& path);

// Minimal RFC 4180 CSV support.
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Fixed-precision rendering used by every CSV/table export.
std::string format_fixed(double value, int decimals = 2);

/// UTC wall clock, ISO-8601 with milliseconds.
std::string utc_timestamp();

}  // namespace ragqa
