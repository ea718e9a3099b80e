#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "daformer/core/param.hpp"
#include "daformer/core/tensor.hpp"

namespace daformer {

/// Named float32 arrays plus a JSON metadata object.
///
/// File layout: 8-byte magic "DAFCKPT1", little-endian u64 header length,
/// the JSON header ({"meta": ..., "arrays": [{"name", "rows", "cols",
/// "dtype", "offset"}]}), then the raw row-major array data.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, MatF> arrays;
};

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws FormatError on a bad magic, truncated data or malformed header.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Stores every parameter value as "<prefix>/<key>".
void pack_params(Checkpoint& ckpt, const std::string& prefix, const ParamStore<float>& params);
/// Restores values; throws StateError if a key is missing or a shape differs.
void unpack_params(const Checkpoint& ckpt, const std::string& prefix, ParamStore<float>& params);

}  // namespace daformer
