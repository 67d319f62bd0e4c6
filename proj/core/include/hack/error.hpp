#pragma once

#include <stdexcept>
#include <string>

namespace hack {

// Error categories map onto the CLI exit codes (usage = 1, schema = 2, data = 3).
enum class ErrorKind { usage, schema, data };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }
inline Error schema_error(const std::string& what) { return Error(ErrorKind::schema, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }

inline int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::schema: return 2;
        case ErrorKind::data: return 3;
    }
    return 3;
}

}  // namespace hack
