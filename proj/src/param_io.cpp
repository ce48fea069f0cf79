#include "metasharp/param_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace metasharp {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'P', 'A', 'R', 'A', 'M', '1'};
constexpr char kCkptMagic[8] = {'M', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f64_le(std::vector<unsigned char>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r = (r << 8) | ((bits >> (8 * i)) & 0xff);
        bits = r;
    }
    put_u64_le(out, bits);
}

double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = get_u64_le(p);
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r = (r << 8) | ((bits >> (8 * i)) & 0xff);
        bits = r;
    }
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

} // namespace

void save_params(const std::string& path, const ParamVector& theta, std::uint64_t spec_hash) {
    std::vector<unsigned char> buf;
    buf.reserve(24 + 8 * theta.size());
    for (char c : kMagic) buf.push_back(static_cast<unsigned char>(c));
    put_u64_le(buf, theta.size());
    put_u64_le(buf, spec_hash);
    for (double v : theta.v) put_f64_le(buf, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_params: cannot open " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("save_params: write failed for " + path);
}

LoadedParams load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_params: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 24)
        throw std::runtime_error("load_params: " + path + ": file ends at byte " +
                                 std::to_string(buf.size()) + ", header needs 24 bytes");
    if (std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error("load_params: " + path + ": bad magic at byte 0");
    const std::uint64_t d = get_u64_le(buf.data() + 8);
    const std::uint64_t hash = get_u64_le(buf.data() + 16);
    const std::uint64_t expect = 24 + 8 * d;
    if (buf.size() != expect)
        throw std::runtime_error("load_params: " + path + ": payload for d=" + std::to_string(d) +
                                 " expects " + std::to_string(expect) + " bytes, file has " +
                                 std::to_string(buf.size()) + " (first inconsistency at byte " +
                                 std::to_string(std::min<std::uint64_t>(buf.size(), expect)) + ")");

    LoadedParams out;
    out.spec_hash = hash;
    out.theta = ParamVector(static_cast<std::size_t>(d));
    for (std::uint64_t i = 0; i < d; ++i) out.theta[i] = get_f64_le(buf.data() + 24 + 8 * i);
    return out;
}

ParamVector load_params_checked(const std::string& path, std::uint64_t expected_spec_hash) {
    LoadedParams lp = load_params(path);
    if (lp.spec_hash != expected_spec_hash)
        throw std::runtime_error("load_params: " + path + ": spec hash mismatch (file " +
                                 std::to_string(lp.spec_hash) + ", expected " +
                                 std::to_string(expected_spec_hash) + ")");
    return std::move(lp.theta);
}

void save_checkpoints(const std::string& path, const std::vector<ParamVector>& thetas,
                      std::uint64_t spec_hash) {
    const std::uint64_t n = thetas.size();
    const std::uint64_t d = n == 0 ? 0 : thetas.front().size();
    for (const auto& t : thetas)
        if (t.size() != d)
            throw std::invalid_argument("save_checkpoints: checkpoints differ in dimension");

    std::vector<unsigned char> buf;
    buf.reserve(32 + 8 * n * d);
    for (char c : kCkptMagic) buf.push_back(static_cast<unsigned char>(c));
    put_u64_le(buf, n);
    put_u64_le(buf, d);
    put_u64_le(buf, spec_hash);
    for (const auto& t : thetas)
        for (double v : t.v) put_f64_le(buf, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_checkpoints: cannot open " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("save_checkpoints: write failed for " + path);
}

LoadedCheckpoints load_checkpoints(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoints: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());

    if (buf.size() < 32)
        throw std::runtime_error("load_checkpoints: " + path + ": file ends at byte " +
                                 std::to_string(buf.size()) + ", header needs 32 bytes");
    if (std::memcmp(buf.data(), kCkptMagic, 8) != 0)
        throw std::runtime_error("load_checkpoints: " + path + ": bad magic at byte 0");
    const std::uint64_t n = get_u64_le(buf.data() + 8);
    const std::uint64_t d = get_u64_le(buf.data() + 16);
    const std::uint64_t hash = get_u64_le(buf.data() + 24);
    const std::uint64_t expect = 32 + 8 * n * d;
    if (buf.size() != expect)
        throw std::runtime_error("load_checkpoints: " + path + ": payload for n=" +
                                 std::to_string(n) + ", d=" + std::to_string(d) + " expects " +
                                 std::to_string(expect) + " bytes, file has " +
                                 std::to_string(buf.size()) + " (first inconsistency at byte " +
                                 std::to_string(std::min<std::uint64_t>(buf.size(), expect)) + ")");

    LoadedCheckpoints out;
    out.spec_hash = hash;
    out.thetas.reserve(static_cast<std::size_t>(n));
    const unsigned char* p = buf.data() + 32;
    for (std::uint64_t i = 0; i < n; ++i) {
        ParamVector t(static_cast<std::size_t>(d));
        for (std::uint64_t j = 0; j < d; ++j) t[static_cast<std::size_t>(j)] = get_f64_le(p + 8 * j);
        p += 8 * d;
        out.thetas.push_back(std::move(t));
    }
    return out;
}

} // namespace metasharp
