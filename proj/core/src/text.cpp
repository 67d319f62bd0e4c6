#include "hack/text.hpp"

#include <algorithm>
#include <cctype>

namespace hack {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool boundary_at(std::string_view s, std::size_t pos) {
    // True when s[pos] does not continue a word (or pos is out of range).
    return pos >= s.size() || !is_alnum(s[pos]);
}

}  // namespace

std::string ascii_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), lower);
    return out;
}

std::string trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return std::string(text.substr(b, e - b));
}

bool starts_with_ci(std::string_view text, std::string_view prefix) {
    if (text.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (lower(text[i]) != lower(prefix[i])) return false;
    }
    return true;
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    int letters = 0;
    bool has_digit = false;
    bool has_slash = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += c;
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalpha(uc) != 0) ++letters;
        if (std::isdigit(uc) != 0) has_digit = true;
        if (c == '/') has_slash = true;
    }
    if (letters > 3 && !has_digit && !has_slash) {
        std::transform(out.begin(), out.end(), out.begin(), lower);
    }
    return out;
}

bool exact_match(std::string_view generation, std::span<const std::string> gold_answers) {
    const std::string g = normalize_answer(generation);
    return std::any_of(gold_answers.begin(), gold_answers.end(),
                       [&](const std::string& gold) { return normalize_answer(gold) == g; });
}

bool containment_match(std::string_view generation, std::span<const std::string> gold_answers) {
    const std::string hay = ascii_lower(normalize_answer(generation));
    for (const auto& gold : gold_answers) {
        const std::string needle = ascii_lower(normalize_answer(gold));
        if (needle.empty()) continue;
        for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
            const bool left_ok = pos == 0 || !is_alnum(hay[pos - 1]) || !is_alnum(needle.front());
            const bool right_ok = boundary_at(hay, pos + needle.size()) || !is_alnum(needle.back());
            if (left_ok && right_ok) return true;
        }
    }
    return false;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (is_alnum(c) || ((c == '/' || c == '\'') && !cur.empty())) {
            cur += lower(c);
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

}  // namespace hack
