#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nlidisc {

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
bool ends_with(std::string_view text, std::string_view suffix) noexcept;
std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now_iso8601();
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace nlidisc
