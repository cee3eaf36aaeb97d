#pragma once

#include <cstddef>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace plexitrace::detail {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

template <typename T>
std::vector<T> words_from_bytes(std::string_view bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  return out;
}

template <typename T>
std::string_view bytes_of(std::span<const T> words) {
  return {reinterpret_cast<const char*>(words.data()), words.size_bytes()};
}

// Backslash escaping for single-line TSV fields (\\, \t, \n, \r).
std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

}  // namespace plexitrace::detail
