#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace surgonair {

// 64-bit FNV-1a. Used for content-addressed caching and manifest hashes;
// stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// splitmix64. Self-contained so that every seeded decision (split shuffle,
// judge presentation order) is reproducible across machines.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();
    // Uniform-ish value in [0, n); n must be > 0.
    std::uint64_t bounded(std::uint64_t n);
    bool coin_flip() { return (next() & 1u) != 0; }

private:
    std::uint64_t state_;
};

std::string read_file(const std::filesystem::path& path);

// Write-then-rename; readers never observe a half-written file.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// Run fn(0..n-1) on up to `workers` threads. The first exception wins and is
// rethrown on the calling thread after all workers join.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

} // namespace surgonair
