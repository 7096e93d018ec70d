#pragma once

#include "nclust/diff/params.hpp"

#include <filesystem>
#include <string>

namespace nclust::diff {

/// Named-tensor archive, all integers and reals little-endian:
///
///   magic "NCLCKPT\0" | u32 version | u64 meta_len | meta bytes
///   u64 count | count × { u64 name_len | name | u8 trainable
///                         u64 rank | rank × u64 extent | f64 values }
///
/// `metadata` is an opaque string (the CLI stores the model config JSON).
struct Checkpoint {
    std::string metadata;
    ParamSet params;
};

inline constexpr std::uint32_t checkpoint_version = 1;

std::string encode_checkpoint(const ParamSet& params, const std::string& metadata);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, const std::string& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace nclust::diff
