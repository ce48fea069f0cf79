#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metasharp/tensor.hpp"

namespace metasharp {

/// IDX binary container: big-endian header of two zero bytes, an element
/// type code, a rank byte, then rank u32 dimensions, then the payload.
/// Accepted type codes: 0x08 unsigned byte, 0x09 signed byte, 0x0D float32,
/// 0x0E float64; anything else is rejected.
struct IdxData {
    std::uint8_t type_code = 0;
    std::vector<std::size_t> dims;
    /// Values as doubles. Integer pixel types are scaled into [0, 1]
    /// (unsigned v/255, signed (v+128)/255); float payloads pass through.
    std::vector<double> values;
};

/// Parses an IDX file; errors name the byte offset of the first problem.
IdxData load_idx(const std::string& path);

/// Writes an unsigned-byte IDX file (values given as raw bytes).
void write_idx_u8(const std::string& path, const std::vector<std::size_t>& dims,
                  const std::vector<std::uint8_t>& bytes);

/// Writes a float64 IDX file.
void write_idx_f64(const std::string& path, const std::vector<std::size_t>& dims,
                   const std::vector<double>& values);

} // namespace metasharp
