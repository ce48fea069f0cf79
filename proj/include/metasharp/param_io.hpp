#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metasharp/params.hpp"

namespace metasharp {

/// Binary parameter file layout, all multi-byte fields little-endian:
///   bytes 0..7   magic "MSPARAM1"
///   bytes 8..15  u64 parameter count d
///   bytes 16..23 u64 model spec hash
///   bytes 24..   d float64 values
void save_params(const std::string& path, const ParamVector& theta, std::uint64_t spec_hash);

struct LoadedParams {
    ParamVector theta;
    std::uint64_t spec_hash = 0;
};

/// Loads and validates a parameter file. Errors report the byte offset of
/// the first inconsistency (bad magic, short header, truncated payload).
LoadedParams load_params(const std::string& path);

/// Load with a spec-hash check against the model the caller intends to use.
ParamVector load_params_checked(const std::string& path, std::uint64_t expected_spec_hash);

/// Binary checkpoint-series layout, all multi-byte fields little-endian:
///   bytes 0..7   magic "MSCKPT01"
///   bytes 8..15  u64 checkpoint count n
///   bytes 16..23 u64 parameter count d
///   bytes 24..31 u64 model spec hash
///   bytes 32..   n*d float64 values, checkpoint-major
/// All checkpoints must share one dimension; n may be zero.
void save_checkpoints(const std::string& path, const std::vector<ParamVector>& thetas,
                      std::uint64_t spec_hash);

struct LoadedCheckpoints {
    std::vector<ParamVector> thetas;
    std::uint64_t spec_hash = 0;
};

/// Loads and validates a checkpoint series; errors report the byte offset of
/// the first inconsistency.
LoadedCheckpoints load_checkpoints(const std::string& path);

} // namespace metasharp
