#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>

#include "hack/error.hpp"

namespace hack::detail {

template <typename E, std::size_t N>
std::string enum_name(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
    for (const auto& [e, name] : table) {
        if (e == value) return std::string(name);
    }
    throw schema_error("unknown enum value");
}

template <typename E, std::size_t N>
E enum_value(const std::array<std::pair<E, std::string_view>, N>& table, const std::string& name,
             const char* what) {
    for (const auto& [e, n] : table) {
        if (n == name) return e;
    }
    throw schema_error(std::string("unknown ") + what + " '" + name + "'");
}

}  // namespace hack::detail
