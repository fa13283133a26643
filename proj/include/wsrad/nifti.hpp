#pragma once

// Minimal single-file NIfTI-1 (.nii) reader/writer. Only the voxel grid,
// spacing, datatype and intensity scaling are honored; orientation is
// written as a diagonal sform/qform and ignored on read.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/image.hpp"

namespace wsrad::nifti {

enum class Datatype : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Float32 = 16,
  Float64 = 64,
};

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kDefaultVoxOffset = 352;

namespace detail {

template <typename T>
T load(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store(unsigned char* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

inline int bytes_per_voxel(Datatype dt) {
  switch (dt) {
    case Datatype::UInt8: return 1;
    case Datatype::Int16: return 2;
    case Datatype::Float32: return 4;
    case Datatype::Float64: return 8;
  }
  return 0;
}

inline bool is_integer(Datatype dt) { return dt == Datatype::UInt8 || dt == Datatype::Int16; }

inline bool known_datatype(std::int16_t code) {
  return code == 2 || code == 4 || code == 16 || code == 64;
}

}  // namespace detail

/// Header fields this library consumes.
struct Header {
  Dims3 dims{1, 1, 1};
  Spacing3 spacing{1.0, 1.0, 1.0};
  Datatype datatype = Datatype::Float32;
  std::size_t vox_offset = kDefaultVoxOffset;
  double scl_slope = 0.0;
  double scl_inter = 0.0;
};

/// Raw decoded file: header plus voxel values converted to double, before scaling.
struct RawImage {
  Header header;
  std::vector<double> values;
};

inline Header parse_header(const unsigned char* h, std::size_t file_size, const std::string& path) {
  using detail::load;
  auto fail = [&](const std::string& field, const std::string& why) {
    throw FormatError(path + ": NIfTI header field '" + field + "': " + why);
  };
  const auto sizeof_hdr = load<std::int32_t>(h + 0);
  if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    std::int32_t swapped = static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr)));
    if (swapped == static_cast<std::int32_t>(kHeaderSize)) fail("sizeof_hdr", "big-endian files are not supported");
    fail("sizeof_hdr", "expected 348, got " + std::to_string(sizeof_hdr));
  }
  if (std::memcmp(h + 344, "n+1\0", 4) != 0) fail("magic", "expected single-file magic \"n+1\"");

  Header hdr;
  const auto ndim = load<std::int16_t>(h + 40);
  if (ndim < 1 || ndim > 7) fail("dim[0]", "rank " + std::to_string(ndim) + " outside 1..7");
  for (int i = 1; i <= 7; ++i) {
    const auto d = load<std::int16_t>(h + 40 + 2 * i);
    if (i <= ndim && d < 1) fail("dim[" + std::to_string(i) + "]", "non-positive extent " + std::to_string(d));
    if (i <= 3) hdr.dims[i - 1] = i <= ndim ? static_cast<std::size_t>(d) : 1;
    if (i > 3 && i <= ndim && d != 1) fail("dim[" + std::to_string(i) + "]", "only 3D images are supported");
  }
  for (int i = 1; i <= 3; ++i) {
    // Axes beyond the header rank default to 1 mm.
    hdr.spacing[i - 1] = (i <= ndim) ? std::fabs(static_cast<double>(load<float>(h + 76 + 4 * i))) : 1.0;
    if (!(hdr.spacing[i - 1] > 0) || !std::isfinite(hdr.spacing[i - 1]))
      fail("pixdim[" + std::to_string(i) + "]", "spacing must be positive and finite");
  }
  const auto code = load<std::int16_t>(h + 70);
  if (!detail::known_datatype(code)) fail("datatype", "unsupported datatype code " + std::to_string(code));
  hdr.datatype = static_cast<Datatype>(code);
  const auto bitpix = load<std::int16_t>(h + 72);
  if (bitpix != 8 * detail::bytes_per_voxel(hdr.datatype))
    fail("bitpix", std::to_string(bitpix) + " inconsistent with datatype " + std::to_string(code));
  const float off = load<float>(h + 108);
  if (!(off >= static_cast<float>(kHeaderSize)) || off != std::floor(off))
    fail("vox_offset", "invalid offset " + std::to_string(off));
  hdr.vox_offset = static_cast<std::size_t>(off);
  hdr.scl_slope = load<float>(h + 112);
  hdr.scl_inter = load<float>(h + 116);

  const std::size_t expected =
      hdr.vox_offset + hdr.dims[0] * hdr.dims[1] * hdr.dims[2] * detail::bytes_per_voxel(hdr.datatype);
  if (file_size < expected)
    fail("vox_offset/dim", "truncated data section: expected " + std::to_string(expected) + " bytes, file has " +
                               std::to_string(file_size));
  return hdr;
}

inline RawImage read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderSize)
    throw FormatError(path.string() + ": NIfTI header field 'sizeof_hdr': file shorter than 348-byte header");
  RawImage raw;
  raw.header = parse_header(bytes.data(), bytes.size(), path.string());
  const auto& hdr = raw.header;
  const std::size_t n = hdr.dims[0] * hdr.dims[1] * hdr.dims[2];
  raw.values.resize(n);
  const unsigned char* p = bytes.data() + hdr.vox_offset;
  using detail::load;
  switch (hdr.datatype) {
    case Datatype::UInt8:
      for (std::size_t i = 0; i < n; ++i) raw.values[i] = p[i];
      break;
    case Datatype::Int16:
      for (std::size_t i = 0; i < n; ++i) raw.values[i] = load<std::int16_t>(p + 2 * i);
      break;
    case Datatype::Float32:
      for (std::size_t i = 0; i < n; ++i) raw.values[i] = load<float>(p + 4 * i);
      break;
    case Datatype::Float64:
      for (std::size_t i = 0; i < n; ++i) raw.values[i] = load<double>(p + 8 * i);
      break;
  }
  return raw;
}

/// Reads an intensity image, applying scl_slope/scl_inter when slope is non-zero.
inline Volume read_volume(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  const auto& h = raw.header;
  if (h.scl_slope != 0.0 && std::isfinite(h.scl_slope) && !(h.scl_slope == 1.0 && h.scl_inter == 0.0))
    for (auto& v : raw.values) v = v * h.scl_slope + h.scl_inter;
  for (std::size_t i = 0; i < raw.values.size(); ++i)
    if (!std::isfinite(raw.values[i]))
      throw FormatError(path.string() + ": non-finite voxel value at index " + std::to_string(i));
  return Volume(h.dims, h.spacing, std::move(raw.values));
}

/// Reads a label mask. Requires an integer datatype with non-negative values.
inline LabelVolume read_labels(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  if (!detail::is_integer(raw.header.datatype))
    throw FormatError(path.string() + ": NIfTI header field 'datatype': label files must be uint8 or int16");
  std::vector<std::uint16_t> labels(raw.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (raw.values[i] < 0)
      throw FormatError(path.string() + ": negative label " + std::to_string(raw.values[i]) + " at index " +
                        std::to_string(i));
    labels[i] = static_cast<std::uint16_t>(raw.values[i]);
  }
  return LabelVolume(raw.header.dims, raw.header.spacing, std::move(labels));
}

inline std::vector<unsigned char> encode_header(const Header& hdr) {
  using detail::store;
  std::vector<unsigned char> h(kHeaderSize, 0);
  store<std::int32_t>(h.data() + 0, static_cast<std::int32_t>(kHeaderSize));
  h[39] = 0;  // dim_info
  store<std::int16_t>(h.data() + 40, 3);
  for (int i = 0; i < 3; ++i) {
    if (hdr.dims[i] > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max()))
      throw InvalidArgument("dimension " + std::to_string(hdr.dims[i]) + " exceeds NIfTI-1 limit");
    store<std::int16_t>(h.data() + 42 + 2 * i, static_cast<std::int16_t>(hdr.dims[i]));
  }
  for (int i = 3; i < 7; ++i) store<std::int16_t>(h.data() + 42 + 2 * i, 1);
  store<std::int16_t>(h.data() + 70, static_cast<std::int16_t>(hdr.datatype));
  store<std::int16_t>(h.data() + 72, static_cast<std::int16_t>(8 * detail::bytes_per_voxel(hdr.datatype)));
  store<float>(h.data() + 76, 1.0f);  // qfac
  for (int i = 0; i < 3; ++i) store<float>(h.data() + 80 + 4 * i, static_cast<float>(hdr.spacing[i]));
  for (int i = 3; i < 7; ++i) store<float>(h.data() + 80 + 4 * i, 1.0f);
  store<float>(h.data() + 108, static_cast<float>(kDefaultVoxOffset));
  store<float>(h.data() + 112, 1.0f);
  store<float>(h.data() + 116, 0.0f);
  h[123] = 2;  // xyzt_units: mm
  std::memcpy(h.data() + 148, "wsrad", 5);
  store<std::int16_t>(h.data() + 252, 1);  // qform_code: scanner
  store<std::int16_t>(h.data() + 254, 1);  // sform_code: scanner
  for (int r = 0; r < 3; ++r)
    store<float>(h.data() + 280 + 16 * r + 4 * r, static_cast<float>(hdr.spacing[r]));
  std::memcpy(h.data() + 344, "n+1\0", 4);
  return h;
}

template <typename T>
void write_grid(const Grid3D<T>& grid, const std::filesystem::path& path, Datatype dt) {
  Header hdr;
  hdr.dims = grid.dims();
  hdr.spacing = grid.spacing();
  hdr.datatype = dt;
  auto bytes = encode_header(hdr);
  bytes.resize(kDefaultVoxOffset, 0);  // zero extension flag
  const std::size_t bpv = detail::bytes_per_voxel(dt);
  const std::size_t n = grid.size();
  bytes.resize(kDefaultVoxOffset + n * bpv);
  unsigned char* p = bytes.data() + kDefaultVoxOffset;
  using detail::store;
  const auto& v = grid.storage();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(v[i]);
    switch (dt) {
      case Datatype::UInt8:
        if (x < 0 || x > 255 || x != std::floor(x)) throw InvalidArgument("value not representable as uint8");
        p[i] = static_cast<std::uint8_t>(x);
        break;
      case Datatype::Int16:
        if (x < -32768 || x > 32767 || x != std::floor(x)) throw InvalidArgument("value not representable as int16");
        store<std::int16_t>(p + 2 * i, static_cast<std::int16_t>(x));
        break;
      case Datatype::Float32: store<float>(p + 4 * i, static_cast<float>(x)); break;
      case Datatype::Float64: store<double>(p + 8 * i, x); break;
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_volume(const Volume& v, const std::filesystem::path& path, Datatype dt = Datatype::Float32) {
  write_grid(v, path, dt);
}

inline void write_labels(const LabelVolume& v, const std::filesystem::path& path, Datatype dt = Datatype::UInt8) {
  write_grid(v, path, dt);
}

}  // namespace wsrad::nifti
