#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "semir/minor.hpp"

namespace semir {

/// SMIN container, little-endian:
///   "SMIN" u32 version=1
///   u32 h, w, d, c, connectivity, |V|, |E|, d_x, d_f
///   d_x node column names, d_f edge column names (u32 length + bytes)
///   |V| x (u32 id, u32 j, u32 k, u32 l, u32 area, u32 boundary_len)
///   X as |V| x d_x f32 row-major, F as |E| x d_f f32 row-major
///   |E| x (u32 u, u32 v)
///   h*w*d u32 membership, 0xFFFFFFFF = deleted
void write_minor(std::ostream &os, const GraphMinor &minor);
GraphMinor read_minor(std::istream &is);
void write_minor(const std::filesystem::path &path, const GraphMinor &minor);
GraphMinor read_minor(const std::filesystem::path &path);

/// Same content as SMIN for debugging.
nlohmann::json minor_to_json(const GraphMinor &minor);

/// Equality over the serialized content (descriptors are ignored).
bool same_serialized_content(const GraphMinor &a, const GraphMinor &b);

nlohmann::json params_to_json(const MinorParams &p);
MinorParams params_from_json(const nlohmann::json &j);

NormOrder parse_norm(const std::string &s);
std::string norm_name(NormOrder n);

} // namespace semir
