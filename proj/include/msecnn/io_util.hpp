#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace msecnn {

/// Writes bytes to a sibling temp file and renames it into place, so readers
/// never observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file_bytes(const std::filesystem::path& path);

// Little-endian scalar packing, independent of host byte order.
void put_u32le(std::string& out, std::uint32_t v);
void put_u64le(std::string& out, std::uint64_t v);
void put_f32le(std::string& out, float v);
std::uint32_t get_u32le(const std::string& in, size_t offset);
std::uint64_t get_u64le(const std::string& in, size_t offset);
float get_f32le(const std::string& in, size_t offset);

}  // namespace msecnn
