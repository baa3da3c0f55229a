#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace fixaudit {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Read a whole file; throws Error when it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::vector<std::string> split_lines(std::string_view text);
std::string_view trim_right(std::string_view s);
std::string_view trim(std::string_view s);

/// Deterministic Fisher-Yates shuffle. Unlike std::shuffle the permutation
/// produced for a given seed is identical across standard libraries.
template <typename T>
void stable_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Make an identifier safe to use as a file name.
std::string sanitize_filename(std::string_view id);

}  // namespace fixaudit
