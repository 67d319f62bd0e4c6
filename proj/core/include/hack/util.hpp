#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hack {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian float32 packing used by the steering and probe JSON payloads.
std::string encode_f32_vector(std::span<const float> values);
std::vector<float> decode_f32_vector(std::string_view base64);

/// Worker count from HACK_AXES_THREADS (defaults to hardware concurrency, min 1).
unsigned worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads.
/// fn must only write to slots owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace hack
