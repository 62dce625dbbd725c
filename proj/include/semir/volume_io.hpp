#pragma once

#include <cstdint>
#include <filesystem>

#include "semir/tensor.hpp"

namespace semir {

enum class DType : std::uint8_t { F32 = 0, U8 = 1, U16 = 2 };

/// SVOL: "SVOL", u32 version=1, u32 h,w,d,c, u8 dtype, row-major channel-last payload.
void write_volume(const std::filesystem::path &path, const Volume &vol, DType dtype = DType::F32);
Volume read_volume(const std::filesystem::path &path);

/// Label maps share the SVOL container with c = 1; dtype picked from the
/// largest label unless given.
void write_labels(const std::filesystem::path &path, const LabelMap &labels);
LabelMap read_labels(const std::filesystem::path &path);

/// SEXP: "SEXP", u32 version=1, three u32 expanded dims, raw flag bytes.
void write_tensor(const std::filesystem::path &path, const ExpandedTensor &t);
ExpandedTensor read_tensor(const std::filesystem::path &path);

} // namespace semir
