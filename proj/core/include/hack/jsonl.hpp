#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/error.hpp"

namespace hack {

// Optional first line of a stage output: {"_provenance": {...}}.
inline constexpr const char* kProvenanceKey = "_provenance";

namespace detail {

/// Calls on_line(json, line_number) for every non-blank line. A leading
/// provenance object is stored in *provenance instead. Parse failures throw
/// schema_error("<source>:<line>: ...").
void for_each_jsonl_line(std::string_view contents, const std::string& source,
                         std::optional<nlohmann::json>* provenance,
                         const std::function<void(const nlohmann::json&, std::size_t)>& on_line);

std::string read_text(const std::filesystem::path& path);

}  // namespace detail

template <typename T>
std::vector<T> parse_jsonl(std::string_view contents, const std::string& source = "<memory>",
                           std::optional<nlohmann::json>* provenance = nullptr) {
    std::vector<T> out;
    detail::for_each_jsonl_line(contents, source, provenance,
                                [&](const nlohmann::json& j, std::size_t line) {
                                    try {
                                        out.push_back(j.get<T>());
                                    } catch (const Error& e) {
                                        throw schema_error(source + ":" + std::to_string(line) + ": " + e.what());
                                    } catch (const nlohmann::json::exception& e) {
                                        throw schema_error(source + ":" + std::to_string(line) + ": " + e.what());
                                    }
                                });
    return out;
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path,
                          std::optional<nlohmann::json>* provenance = nullptr) {
    return parse_jsonl<T>(detail::read_text(path), path.string(), provenance);
}

template <typename T>
std::string to_jsonl(std::span<const T> records, const nlohmann::json* provenance = nullptr) {
    std::string out;
    if (provenance != nullptr) {
        out += nlohmann::json{{kProvenanceKey, *provenance}}.dump();
        out += '\n';
    }
    for (const auto& r : records) {
        out += nlohmann::json(r).dump();
        out += '\n';
    }
    return out;
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> records,
                 const nlohmann::json* provenance = nullptr);

void write_text_atomic(const std::filesystem::path& path, std::string_view contents);

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> records,
                 const nlohmann::json* provenance) {
    write_text_atomic(path, to_jsonl(records, provenance));
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records,
                 const nlohmann::json* provenance = nullptr) {
    write_jsonl(path, std::span<const T>(records), provenance);
}

}  // namespace hack
