#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hack/types.hpp"

namespace hack {

/// Binary activation store, little-endian throughout:
///
///   "HACKACTV1"                      9 bytes
///   u32 record count
///   per record:
///     u16 id length, id bytes        id = item_id '\t' setting_id
///     u16 layer
///     u16 head                       0xFFFF = residual_out
///     u32 dim
///     dim x f32
///
/// An id without a tab is read back with setting_id = "baseline".
inline constexpr std::string_view kActivationMagic = "HACKACTV1";

std::string encode_activation_store(std::span<const ActivationRecord> records);

/// Throws schema_error on bad magic, truncation, trailing bytes or
/// inconsistent dimensions at one hook.
std::vector<ActivationRecord> decode_activation_store(std::string_view bytes);

void write_activation_store(const std::filesystem::path& path, std::span<const ActivationRecord> records);
std::vector<ActivationRecord> read_activation_store(const std::filesystem::path& path);

}  // namespace hack
