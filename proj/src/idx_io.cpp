#include "metasharp/idx_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace metasharp {

namespace {

[[noreturn]] void idx_error(const std::string& path, std::size_t offset, const std::string& what) {
    throw std::runtime_error("load_idx: " + path + ": byte " + std::to_string(offset) + ": " + what);
}

std::uint32_t read_u32_be(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

std::size_t element_size(std::uint8_t code) {
    switch (code) {
    case 0x08:
    case 0x09: return 1;
    case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
    }
}

float be_float(const unsigned char* p) {
    std::uint32_t bits = read_u32_be(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

double be_double(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits = (bits << 8) | p[i];
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

} // namespace

IdxData load_idx(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_idx: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 4) idx_error(path, buf.size(), "file shorter than the 4-byte magic");
    if (buf[0] != 0 || buf[1] != 0) idx_error(path, buf[0] != 0 ? 0 : 1, "magic must start with two zero bytes");
    IdxData out;
    out.type_code = buf[2];
    if (element_size(out.type_code) == 0)
        idx_error(path, 2, "unsupported element type code " + std::to_string(buf[2]) +
                               " (supported: 0x08, 0x09, 0x0D, 0x0E)");
    const std::size_t rank = buf[3];
    if (rank == 0) idx_error(path, 3, "rank must be >= 1");
    const std::size_t header = 4 + 4 * rank;
    if (buf.size() < header)
        idx_error(path, buf.size(), "file ends inside the dimension list (need " + std::to_string(header) +
                                        " header bytes)");
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t d = read_u32_be(buf.data() + 4 + 4 * i);
        out.dims.push_back(d);
        n *= d;
    }
    const std::size_t payload = n * element_size(out.type_code);
    if (buf.size() != header + payload)
        idx_error(path, std::min(buf.size(), header + payload),
                  "payload of " + std::to_string(n) + " elements expects " +
                      std::to_string(header + payload) + " total bytes, file has " + std::to_string(buf.size()));

    out.values.resize(n);
    const unsigned char* p = buf.data() + header;
    switch (out.type_code) {
    case 0x08:
        for (std::size_t i = 0; i < n; ++i) out.values[i] = static_cast<double>(p[i]) / 255.0;
        break;
    case 0x09:
        for (std::size_t i = 0; i < n; ++i)
            out.values[i] = (static_cast<double>(static_cast<signed char>(p[i])) + 128.0) / 255.0;
        break;
    case 0x0D:
        for (std::size_t i = 0; i < n; ++i) out.values[i] = static_cast<double>(be_float(p + 4 * i));
        break;
    case 0x0E:
        for (std::size_t i = 0; i < n; ++i) out.values[i] = be_double(p + 8 * i);
        break;
    }
    return out;
}

namespace {

void write_header(std::vector<unsigned char>& buf, std::uint8_t code,
                  const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw std::invalid_argument("write_idx: rank must be >= 1");
    if (dims.size() > 255) throw std::invalid_argument("write_idx: rank exceeds 255");
    buf.push_back(0);
    buf.push_back(0);
    buf.push_back(code);
    buf.push_back(static_cast<unsigned char>(dims.size()));
    for (std::size_t d : dims) {
        if (d > 0xffffffffull) throw std::invalid_argument("write_idx: dimension exceeds u32");
        buf.push_back(static_cast<unsigned char>((d >> 24) & 0xff));
        buf.push_back(static_cast<unsigned char>((d >> 16) & 0xff));
        buf.push_back(static_cast<unsigned char>((d >> 8) & 0xff));
        buf.push_back(static_cast<unsigned char>(d & 0xff));
    }
}

void flush(const std::string& path, const std::vector<unsigned char>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_idx: cannot open " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("write_idx: write failed for " + path);
}

std::size_t count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

} // namespace

void write_idx_u8(const std::string& path, const std::vector<std::size_t>& dims,
                  const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() != count(dims))
        throw std::invalid_argument("write_idx_u8: " + std::to_string(bytes.size()) + " values for dims of " +
                                    std::to_string(count(dims)));
    std::vector<unsigned char> buf;
    write_header(buf, 0x08, dims);
    buf.insert(buf.end(), bytes.begin(), bytes.end());
    flush(path, buf);
}

void write_idx_f64(const std::string& path, const std::vector<std::size_t>& dims,
                   const std::vector<double>& values) {
    if (values.size() != count(dims))
        throw std::invalid_argument("write_idx_f64: " + std::to_string(values.size()) + " values for dims of " +
                                    std::to_string(count(dims)));
    std::vector<unsigned char> buf;
    write_header(buf, 0x0E, dims);
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 7; i >= 0; --i) buf.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
    }
    flush(path, buf);
}

} // namespace metasharp
