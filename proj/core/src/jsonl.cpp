#include "hack/jsonl.hpp"

#include "hack/util.hpp"

namespace hack {
namespace detail {

void for_each_jsonl_line(std::string_view contents, const std::string& source,
                         std::optional<nlohmann::json>* provenance,
                         const std::function<void(const nlohmann::json&, std::size_t)>& on_line) {
    std::size_t line_no = 0;
    bool first_record = true;
    std::size_t pos = 0;
    while (pos < contents.size()) {
        const std::size_t end = std::min(contents.find('\n', pos), contents.size());
        std::string_view line = contents.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw schema_error(source + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (first_record && j.is_object() && j.size() == 1 && j.contains(kProvenanceKey)) {
            if (provenance != nullptr) *provenance = j.at(kProvenanceKey);
            first_record = false;
            continue;
        }
        first_record = false;
        if (!j.is_object()) throw schema_error(source + ":" + std::to_string(line_no) + ": expected a JSON object");
        on_line(j, line_no);
    }
}

std::string read_text(const std::filesystem::path& path) { return read_file(path); }

}  // namespace detail

void write_text_atomic(const std::filesystem::path& path, std::string_view contents) { write_file(path, contents); }

}  // namespace hack
