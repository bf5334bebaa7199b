#pragma once

// Single-file checkpoint:
//
//   "CASSCKPT" | u32 version
//   u64 manifest length | manifest (JSON text, keys sorted)
//   u64 array count
//   per array, sorted by name:
//     u32 name length | name | u32 rank | rank x u64 dims | numel x f64
//
// All integers and floats little-endian. Identical state gives identical bytes.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "cass/tensor.hpp"

namespace cass {

struct Checkpoint {
    nlohmann::json manifest;
    std::map<std::string, Tensor> arrays;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);  // throws CheckpointError

// Writes via a temporary file and rename, so a crash never leaves a torn file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Adds every parameter under `prefix` + name.
void store_params(Checkpoint& ckpt, const ParamList& params, const std::string& prefix = "");

// Copies stored values into existing parameter tensors. Throws CheckpointError
// for a missing array or a shape mismatch (message names both shapes).
void restore_params(const Checkpoint& ckpt, ParamList& params, const std::string& prefix = "");

}  // namespace cass
