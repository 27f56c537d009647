#include "meco/io_util.hpp"

#include "meco/error.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace meco::io {

void write_atomic(const std::filesystem::path & path, const std::function<void(std::ostream &)> & fill) {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += fmt::format(".tmp.{}", ::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing: " + tmp.string());
        }
        try {
            fill(out);
            out.flush();
        } catch (...) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw;
        }
        if (!out) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("write failed, nothing committed: " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw IoError("cannot rename into place: " + path.string() + ": " + ec.message());
    }
}

void write_text_atomic(const std::filesystem::path & path, std::string_view text) {
    write_atomic(path, [&](std::ostream & os) { os.write(text.data(), static_cast<std::streamsize>(text.size())); });
}

std::string read_text(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    if (std::isinf(v)) {
        return v < 0 ? "-inf" : "+inf";
    }
    return fmt::format("{}", v);
}

std::string format_fixed(double v, int decimals) {
    return fmt::format("{:.{}f}", v, decimals);
}

static_assert(std::endian::native == std::endian::little, "MACT1 I/O assumes a little-endian host");

void put_u16(std::ostream & os, std::uint16_t v) { os.write(reinterpret_cast<const char *>(&v), 2); }
void put_u32(std::ostream & os, std::uint32_t v) { os.write(reinterpret_cast<const char *>(&v), 4); }
void put_u64(std::ostream & os, std::uint64_t v) { os.write(reinterpret_cast<const char *>(&v), 8); }
void put_f32(std::ostream & os, float v) { os.write(reinterpret_cast<const char *>(&v), 4); }

std::uint16_t load_u16(const unsigned char * p) {
    std::uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
}
std::uint32_t load_u32(const unsigned char * p) {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}
std::uint64_t load_u64(const unsigned char * p) {
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    return v;
}
float load_f32(const unsigned char * p) {
    float v;
    std::memcpy(&v, p, 4);
    return v;
}

} // namespace meco::io
