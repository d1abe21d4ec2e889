#pragma once

#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fedtrans/model/parameters.hpp"

namespace fedtrans::model {

/// Self-describing parameter container.
///
/// Layout (all integers little-endian):
///   magic "FTCKPT\0\0", u32 version,
///   u64 metadata length, metadata as UTF-8 JSON,
///   u32 section count, then per section:
///     u32 name length, name, u32 tensor count, then per tensor:
///       u32 path length, path, u32 rank, u64 dims[rank], f64 values[prod(dims)].
/// Sections and tensors are written in lexicographic order, so equal contents give equal bytes.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, ParameterSet> sections;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr const char* kSharedSection = "shared";
/// Section name of a site's personalized predictor.
std::string head_section(std::size_t site);

std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws LoadError on a malformed or truncated container.
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

/// A container with only the shared section; what a client uploads.
std::string serialize_shared(const SharedParameters& shared);
SharedParameters deserialize_shared(std::string_view bytes);

}  // namespace fedtrans::model
