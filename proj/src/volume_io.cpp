#include "semir/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "semir/binary_io.hpp"

namespace semir {

namespace {

constexpr std::uint32_t kVersion = 1;

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  return os;
}

std::ifstream open_in(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open " + path.string());
  }
  return is;
}

void write_header(std::ostream &os, const VolumeDims &dims, DType dtype) {
  binary::put_magic(os, "SVOL");
  binary::put<std::uint32_t>(os, kVersion);
  for (auto v : {dims.h, dims.w, dims.d, dims.c}) {
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
  }
  binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
}

struct Header {
  VolumeDims dims;
  DType dtype;
};

Header read_header(std::istream &is) {
  binary::expect_magic(is, "SVOL");
  binary::expect_version(is, kVersion);
  Header hd;
  hd.dims.h = binary::get<std::uint32_t>(is);
  hd.dims.w = binary::get<std::uint32_t>(is);
  hd.dims.d = binary::get<std::uint32_t>(is);
  hd.dims.c = binary::get<std::uint32_t>(is);
  const auto dt = binary::get<std::uint8_t>(is);
  if (dt > 2) {
    throw FormatError("unknown SVOL dtype " + std::to_string(dt));
  }
  hd.dtype = static_cast<DType>(dt);
  try {
    hd.dims.validate();
  } catch (const InvalidParams &e) {
    throw FormatError(e.what());
  }
  return hd;
}

template <typename Fn> void read_payload(std::istream &is, const Header &hd, std::size_t n, Fn &&sink) {
  for (std::size_t i = 0; i < n; ++i) {
    switch (hd.dtype) {
    case DType::F32: sink(i, static_cast<double>(binary::get<float>(is))); break;
    case DType::U8: sink(i, static_cast<double>(binary::get<std::uint8_t>(is))); break;
    case DType::U16: sink(i, static_cast<double>(binary::get<std::uint16_t>(is))); break;
    }
  }
}

} // namespace

void write_volume(const std::filesystem::path &path, const Volume &vol, DType dtype) {
  vol.validate();
  auto os = open_out(path);
  write_header(os, vol.dims, dtype);
  for (float v : vol.data) {
    switch (dtype) {
    case DType::F32: binary::put<float>(os, v); break;
    case DType::U8: binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L))); break;
    case DType::U16:
      binary::put<std::uint16_t>(os, static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 65535L)));
      break;
    }
  }
  if (!os) {
    throw FormatError("write failed: " + path.string());
  }
}

Volume read_volume(const std::filesystem::path &path) {
  auto is = open_in(path);
  const auto hd = read_header(is);
  Volume vol(hd.dims);
  read_payload(is, hd, vol.data.size(), [&](std::size_t i, double v) { vol.data[i] = static_cast<float>(v); });
  vol.validate();
  return vol;
}

void write_labels(const std::filesystem::path &path, const LabelMap &labels) {
  auto os = open_out(path);
  const DType dtype = labels.max_label() < 256 ? DType::U8 : DType::U16;
  VolumeDims dims = labels.dims;
  dims.c = 1;
  write_header(os, dims, dtype);
  for (auto v : labels.labels) {
    if (dtype == DType::U8) {
      binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(v));
    } else {
      binary::put<std::uint16_t>(os, v);
    }
  }
  if (!os) {
    throw FormatError("write failed: " + path.string());
  }
}

LabelMap read_labels(const std::filesystem::path &path) {
  auto is = open_in(path);
  const auto hd = read_header(is);
  if (hd.dims.c != 1 || hd.dtype == DType::F32) {
    throw FormatError("label map must be single-channel u8/u16: " + path.string());
  }
  LabelMap out(hd.dims);
  read_payload(is, hd, out.labels.size(),
               [&](std::size_t i, double v) { out.labels[i] = static_cast<std::uint16_t>(v); });
  return out;
}

void write_tensor(const std::filesystem::path &path, const ExpandedTensor &t) {
  auto os = open_out(path);
  binary::put_magic(os, "SEXP");
  binary::put<std::uint32_t>(os, kVersion);
  for (auto s : t.shape()) {
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  }
  const auto raw = t.raw();
  os.write(reinterpret_cast<const char *>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) {
    throw FormatError("write failed: " + path.string());
  }
}

ExpandedTensor read_tensor(const std::filesystem::path &path) {
  auto is = open_in(path);
  binary::expect_magic(is, "SEXP");
  binary::expect_version(is, kVersion);
  std::array<std::size_t, 3> shape{};
  for (auto &s : shape) {
    s = binary::get<std::uint32_t>(is);
  }
  std::vector<std::uint8_t> flags(shape[0] * shape[1] * shape[2]);
  if (!is.read(reinterpret_cast<char *>(flags.data()), static_cast<std::streamsize>(flags.size()))) {
    throw FormatError("truncated SEXP payload");
  }
  return ExpandedTensor(shape, std::move(flags));
}

} // namespace semir
