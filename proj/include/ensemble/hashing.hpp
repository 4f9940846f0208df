#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ensemble {

/// SplitMix64 finalizer; used to turn structured keys into RNG seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// 64-bit FNV-1a over bytes. Stable across platforms and runs.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for a job identified by `key`, derived from a master seed.
/// Independent of scheduling: the same key always yields the same seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
    return mix64(fnv1a(key, mix64(master)));
}

/// Git-style object hash: SHA-1 of "blob <size>\0" followed by the content,
/// as lowercase hex.
std::string git_blob_hash(std::string_view content);

/// Plain SHA-1 hex digest.
std::string sha1_hex(std::string_view content);

}  // namespace ensemble
