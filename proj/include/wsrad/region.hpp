#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/image.hpp"

namespace wsrad {

enum class RegionKind { Intratumoral, Peritumoral };

inline std::string_view to_string(RegionKind k) { return k == RegionKind::Intratumoral ? "intra" : "peri"; }

struct RegionSpec {
  RegionKind kind = RegionKind::Intratumoral;
  std::set<std::uint16_t> labels;

  // Necrotic/non-enhancing core (1) and enhancing core (4).
  static RegionSpec intratumoral() { return {RegionKind::Intratumoral, {1, 4}}; }
  // Edema (2).
  static RegionSpec peritumoral() { return {RegionKind::Peritumoral, {2}}; }
};

inline void check_disjoint(const RegionSpec& a, const RegionSpec& b) {
  for (auto l : a.labels)
    if (b.labels.count(l)) throw InvalidArgument("region label sets overlap on label " + std::to_string(l));
}

struct RegionSlice {
  std::size_t slice_index = 0;
  std::size_t row0 = 0;  // bounding-box origin in the full slice
  std::size_t col0 = 0;
  Image image;  // zero outside mask
  Mask mask;
};

struct MaskedRegion {
  std::vector<RegionSlice> slices;

  std::size_t pixel_count() const {
    std::size_t n = 0;
    for (const auto& s : slices) n += count_true(s.mask);
    return n;
  }
};

/// Per axial slice: bounding box of matching voxels grown by `pad`, clipped to
/// the slice, with the image zeroed outside the region.
inline MaskedRegion extract_region(const Volume& vol, const LabelVolume& mask, const RegionSpec& spec,
                                   std::size_t pad = 0) {
  if (vol.dims() != mask.dims()) throw InvalidArgument("extract_region: volume and mask dims differ");
  if (spec.labels.empty()) throw InvalidArgument("extract_region: empty label set");
  const std::size_t nx = vol.nx(), ny = vol.ny();
  MaskedRegion out;
  for (std::size_t z = 0; z < vol.nz(); ++z) {
    std::size_t rmin = ny, rmax = 0, cmin = nx, cmax = 0;
    bool any = false;
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x)
        if (spec.labels.count(mask(x, y, z))) {
          any = true;
          rmin = std::min(rmin, y);
          rmax = std::max(rmax, y);
          cmin = std::min(cmin, x);
          cmax = std::max(cmax, x);
        }
    if (!any) continue;
    rmin = rmin >= pad ? rmin - pad : 0;
    cmin = cmin >= pad ? cmin - pad : 0;
    rmax = std::min(ny - 1, rmax + pad);
    cmax = std::min(nx - 1, cmax + pad);
    RegionSlice s;
    s.slice_index = z;
    s.row0 = rmin;
    s.col0 = cmin;
    s.image = Image(rmax - rmin + 1, cmax - cmin + 1, 0.0);
    s.mask = Mask(rmax - rmin + 1, cmax - cmin + 1, 0);
    for (std::size_t y = rmin; y <= rmax; ++y)
      for (std::size_t x = cmin; x <= cmax; ++x)
        if (spec.labels.count(mask(x, y, z))) {
          s.mask(y - rmin, x - cmin) = 1;
          s.image(y - rmin, x - cmin) = vol(x, y, z);
        }
    out.slices.push_back(std::move(s));
  }
  if (out.slices.empty())
    throw EmptyRegionError(std::string("region '") + std::string(to_string(spec.kind)) + "' matches no voxels");
  return out;
}

/// Wraps a single 2D image and mask as a one-slice region.
inline MaskedRegion region_from_image(const Image& image, const Mask& mask) {
  if (image.rows() != mask.rows() || image.cols() != mask.cols())
    throw InvalidArgument("region_from_image: image and mask dims differ");
  if (count_true(mask) == 0) throw EmptyRegionError("region_from_image: empty mask");
  RegionSlice s;
  s.image = image;
  s.mask = mask;
  for (std::size_t i = 0; i < image.size(); ++i)
    if (!mask.values()[i]) s.image.values()[i] = 0.0;
  MaskedRegion r;
  r.slices.push_back(std::move(s));
  return r;
}

}  // namespace wsrad
