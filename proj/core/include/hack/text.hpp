#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hack {

/// Canonical answer form: trimmed, whitespace runs collapsed to one space,
/// and lowercased only when the text has more than 3 letters, no digit and
/// no '/'. Otherwise case is preserved ("USA" stays "USA").
std::string normalize_answer(std::string_view text);

/// normalize_answer(generation) equals normalize_answer of some gold variant.
bool exact_match(std::string_view generation, std::span<const std::string> gold_answers);

/// Some normalized gold variant occurs in the normalized generation on word
/// boundaries (ASCII case-insensitive). "7" does not match inside "1776".
bool containment_match(std::string_view generation, std::span<const std::string> gold_answers);

/// Lowercased alphanumeric words ('/' and apostrophes kept inside words).
std::vector<std::string> split_words(std::string_view text);

std::string ascii_lower(std::string_view text);
std::string trim(std::string_view text);
bool starts_with_ci(std::string_view text, std::string_view prefix);

}  // namespace hack
