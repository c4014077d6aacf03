#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medorch::text {

/// Strip surrounding ASCII whitespace.
std::string_view trim(std::string_view s);

/// ASCII lowercase copy (non-ASCII bytes pass through untouched).
std::string to_lower(std::string_view s);

/// Case-insensitive substring test (ASCII folding).
bool contains_ci(std::string_view haystack, std::string_view needle);

/// Collapse every run of whitespace to a single space.
std::string collapse_ws(std::string_view s);

/// trim + casefold + collapse internal whitespace. Diagnosis-name equality.
std::string normalize_label(std::string_view s);

/// normalize_label plus punctuation stripped. Moderator tier-1 equality.
std::string normalize_loose(std::string_view s);

/// Case-fold and drop '_', '-' and spaces entirely. Test-name matching.
std::string normalize_test_name(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

/// Split on any of the given single-char separators, trimming pieces,
/// dropping empties.
std::vector<std::string> split_any(std::string_view s, std::string_view seps);

bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Replace characters unsafe in filenames with '_'.
std::string sanitize_filename(std::string_view s);

}  // namespace medorch::text
