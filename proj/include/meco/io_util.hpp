#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

namespace meco::io {

// Writes via `fill` into a temporary sibling of `path`, then renames it into
// place. On any failure the temporary is removed and `path` is untouched.
void write_atomic(const std::filesystem::path & path, const std::function<void(std::ostream &)> & fill);

void write_text_atomic(const std::filesystem::path & path, std::string_view text);

std::string read_text(const std::filesystem::path & path);

// Shortest round-trip decimal for a double; "-inf"/"+inf" for infinities.
std::string format_double(double v);

// Fixed-precision decimal used by CSV reports.
std::string format_fixed(double v, int decimals);

void put_u16(std::ostream & os, std::uint16_t v);
void put_u32(std::ostream & os, std::uint32_t v);
void put_u64(std::ostream & os, std::uint64_t v);
void put_f32(std::ostream & os, float v);

std::uint16_t load_u16(const unsigned char * p);
std::uint32_t load_u32(const unsigned char * p);
std::uint64_t load_u64(const unsigned char * p);
float load_f32(const unsigned char * p);

} // namespace meco::io
