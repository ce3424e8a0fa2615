#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scifield {

/// Error taxonomy shared by the whole library. The kind maps 1:1 onto the
/// process exit codes of the CLI and the status codes of the C API:
/// usage = 1, data = 2, internal = 3.
enum class ErrorKind : int { usage = 1, data = 2, internal = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(std::string message) {
    throw Error(ErrorKind::usage, std::move(message));
}

[[noreturn]] inline void throw_data(std::string message) {
    throw Error(ErrorKind::data, std::move(message));
}

[[noreturn]] inline void throw_internal(std::string message) {
    throw Error(ErrorKind::internal, std::move(message));
}

/// FNV-1a, 64 bit. Used for vocabulary fingerprints and manifest content
/// hashes; stable across platforms by construction.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ull) {
    uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(uint64_t value);

uint32_t crc32(std::string_view bytes);

// Little-endian scalar encoding for the on-disk formats.
void put_u32(std::string& out, uint32_t v);
void put_u64(std::string& out, uint64_t v);
uint32_t get_u32(std::string_view bytes, size_t offset);
uint64_t get_u64(std::string_view bytes, size_t offset);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
/// Write via a sibling temp file + rename so readers never observe a
/// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

uint64_t hash_file(const std::filesystem::path& path);

std::vector<std::string_view> split_view(std::string_view text, char sep);

/// Fixed-width decimal formatting for doubles in text outputs (no locale,
/// no exponent), so emitted files are byte-stable across runs.
std::string format_double(double v, int digits = 9);

}  // namespace scifield
