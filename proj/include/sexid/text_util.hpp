#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sexid {

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string_view trim(std::string_view s) noexcept;
std::string to_lower_ascii(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix) noexcept;

/// Formats a real with the shortest representation that round-trips.
std::string format_real(double v);
/// Plain decimal without exponent or trailing zeros: 5e-5 -> "0.00005".
std::string format_decimal(double v);
/// Fixed three-decimal rendering used in report tables.
std::string format_metric(double v);

double parse_real(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

/// One parsed TSV file: header plus rows of equal width. Lines are LF
/// separated; a trailing CR is tolerated and stripped.
struct TsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line per row

    /// Column index for a header name, or npos.
    std::size_t column(std::string_view name) const noexcept;
};

TsvTable read_tsv(const std::filesystem::path& path);
TsvTable parse_tsv(std::string_view content, std::string_view origin);

/// Rejects embedded tabs/newlines, which the format cannot represent.
void check_tsv_field(std::string_view field, std::string_view what);
std::string tsv_line(const std::vector<std::string>& fields);

std::string read_file(const std::filesystem::path& path);
/// Writes atomically (temp file + rename) so a crashed run never leaves a
/// half-written artifact behind a valid name.
void write_file(const std::filesystem::path& path, std::string_view content);
void append_file(const std::filesystem::path& path, std::string_view content);

/// key=value lines with '#' comments; duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(std::string_view content, std::string_view origin);
std::string render_key_values(const std::map<std::string, std::string>& kv);

/// Plain-text table with space-padded columns (width counted in code points)
/// and a dashed rule under the header.
std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

}  // namespace sexid
